#![allow(dead_code)]

pub mod oracles;
pub mod sched;

use std::path::{Path, PathBuf};

use gossipnet::runner::{build_schedule, replay_lines, run_seed, EventLog, ReplayedRun, RunConfig};
use serde_json::{json, Value};

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Load a shipped config, redirecting its output into `out`.
pub fn shipped(name: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&configs_dir().join(format!("{name}.json"))).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Build a config from a JSON object; `output_dir` defaults to a dummy path.
pub fn config(mut v: Value) -> RunConfig {
    if v.get("output_dir").is_none() {
        v["output_dir"] = json!("unused");
    }
    serde_json::from_value(v).unwrap()
}

pub fn donation(roster: Value) -> RunConfig {
    config(json!({
        "name": "donation", "game": "donation", "horizon_type": "infinite", "rounds": 36, "gamma": 0.99,
        "monitoring": "gossip_public", "protocol": "hierarchical_tones", "roster": roster
    }))
}

pub fn ir(rounds: u32, roster: Value) -> RunConfig {
    config(json!({
        "name": "ir", "game": "ir", "horizon_type": "infinite", "rounds": rounds, "gamma": 0.99,
        "monitoring": "gossip_public", "protocol": "hierarchical_tones", "roster": roster
    }))
}

/// Play one seed in memory and rebuild it from its own event log.
pub fn play(cfg: &RunConfig, seed: u64) -> ReplayedRun {
    cfg.validate().unwrap();
    let agents = cfg.agents().unwrap();
    let schedule = build_schedule(cfg, &agents, seed).unwrap();
    let run = run_seed(cfg, &agents, &schedule, seed).unwrap();
    if let Err(e) = &run.result {
        panic!("seed {seed} aborted: {e}");
    }
    let mut log = EventLog::default();
    log.extend(seed, run.log.events);
    replay_lines(&log.lines).unwrap().remove(0)
}

/// Participation-indexed value of `rewards` repeated in order.
pub fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(k, r)| gamma.powi(k as i32) * r)
        .sum()
}
