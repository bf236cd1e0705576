mod common;

use std::fs;

use gossipnet::llm::stub::StubServer;
use gossipnet::runner::{
    self, read_log, replay, ReplayError, RunError, RunOptions, EVENTS_FILE, SUMMARY_FILE,
    TRANSCRIPT_FILE,
};
use gossipnet::sim::Event;
use serde_json::{json, Value};

const SCRIPTED: &[&str] = &[
    "donation_grim",
    "donation_defect",
    "donation_greedy",
    "donation_self_report",
    "ir_grim",
    "ir_defect",
    "ir_binary_gossip",
    "investment_trust",
    "market_grim",
];

#[test]
fn scripted_configs_are_byte_identical_across_executions() {
    for name in SCRIPTED {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        runner::run(&common::shipped(name, a.path()), &RunOptions::default()).unwrap();
        runner::run(&common::shipped(name, b.path()), &RunOptions::default()).unwrap();
        for f in [EVENTS_FILE, SUMMARY_FILE] {
            let (x, y) = (
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
            );
            assert!(x == y, "{name}: {f} differs between executions");
        }
        let report = replay(&a.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(
            report.csv_matches,
            Some(true),
            "{name}: replay does not reproduce summary.csv"
        );
    }
}

#[test]
fn adding_a_seed_leaves_other_seeds_untouched() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut one = common::shipped("donation_greedy", a.path());
    one.seeds = vec![3];
    let mut many = common::shipped("donation_greedy", b.path());
    many.seeds = vec![0, 3, 7];
    runner::run(&one, &RunOptions::default()).unwrap();
    runner::run(&many, &RunOptions::default()).unwrap();
    let strip = |lines: Vec<gossipnet::runner::LogLine>| -> Vec<Event> {
        lines
            .into_iter()
            .filter(|l| l.seed == 3)
            .map(|l| l.event)
            .collect()
    };
    let alone = strip(read_log(&a.path().join(EVENTS_FILE)).unwrap());
    let among = strip(read_log(&b.path().join(EVENTS_FILE)).unwrap());
    assert!(!alone.is_empty());
    assert_eq!(alone, among);
}

fn edit_log(path: &std::path::Path, f: impl FnOnce(&mut Vec<Value>)) {
    let mut lines: Vec<Value> = fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    f(&mut lines);
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).unwrap();
}

#[test]
fn hand_edited_reward_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    runner::run(
        &common::shipped("ir_grim", dir.path()),
        &RunOptions::default(),
    )
    .unwrap();
    let log = dir.path().join(EVENTS_FILE);
    edit_log(&log, |lines| {
        let step = lines.iter_mut().find(|l| l["event"] == "step").unwrap();
        step["record"]["rewards"][0] = json!(5.0);
        step["record"]["resources_after"][0] = json!(15.0);
    });
    assert!(matches!(replay(&log), Err(ReplayError::Integrity { .. })));
}

#[test]
fn truncated_log_is_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    runner::run(
        &common::shipped("ir_grim", dir.path()),
        &RunOptions::default(),
    )
    .unwrap();
    let log = dir.path().join(EVENTS_FILE);
    edit_log(&log, |lines| {
        lines.pop();
    });
    assert!(matches!(
        replay(&log),
        Err(ReplayError::ReplayIncomplete(_))
    ));
}

#[test]
fn ledger_total_matches_logged_rewards() {
    for name in ["donation_greedy", "investment_trust", "market_grim"] {
        let cfg = common::shipped(name, std::path::Path::new("unused"));
        let run = common::play(&cfg, 1);
        let logged: f64 = run.records.iter().flat_map(|r| r.rewards).sum();
        let endowment = cfg.game_spec().unwrap().endowment();
        let held: f64 = run.final_resources.iter().map(|r| r - endowment).sum();
        assert!((logged - held).abs() < 1e-9, "{name}");
    }
}

#[test]
fn phases_appear_in_loop_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::shipped("donation_self_report", dir.path());
    cfg.seeds = vec![0];
    runner::run(&cfg, &RunOptions::default()).unwrap();
    let lines = read_log(&dir.path().join(EVENTS_FILE)).unwrap();
    let rank = |e: &Event| match e {
        Event::Observe { .. }
        | Event::Act { .. }
        | Event::Reflect { .. }
        | Event::Gossip { .. } => Some(0),
        Event::Step { .. } => Some(1),
        Event::Publish { .. } => Some(2),
        Event::MemoryUpdate { .. } => Some(3),
        _ => None,
    };
    // Within each dyad the ranks never go down; a new dyad starts with an observe.
    let mut last = 0;
    for l in &lines {
        let Some(r) = rank(&l.event) else { continue };
        if matches!(l.event, Event::Observe { .. }) && last == 3 {
            last = 0;
        }
        assert!(r >= last, "seq {}: {:?} after rank {last}", l.seq, l.event);
        last = r;
    }
    assert_eq!(
        lines
            .iter()
            .filter(|l| matches!(l.event, Event::Step { .. }))
            .count(),
        36
    );
    // The act of each dyad precedes its own witness observation and gossip.
    let kinds: Vec<&str> = lines
        .iter()
        .take_while(|l| !matches!(l.event, Event::Step { .. }))
        .map(|l| match l.event {
            Event::RunStart { .. } => "start",
            Event::Observe { .. } => "observe",
            Event::Act { .. } => "act",
            Event::Gossip { .. } => "gossip",
            _ => "other",
        })
        .collect();
    assert_eq!(
        kinds,
        ["start", "observe", "act", "gossip", "observe", "gossip"]
    );
}

#[test]
fn failed_llm_run_keeps_marked_partial_log() {
    let stub = StubServer::fixed("I would rather not answer in JSON.").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config(json!({
        "name": "llm_abort", "game": "donation", "horizon_type": "finite", "rounds": 36,
        "monitoring": "gossip_public", "protocol": "hierarchical_tones",
        "roster": [{"name": "agent", "policy": "llm", "count": 9}],
        "seeds": [0], "output_dir": dir.path(),
        "endpoint": {"base_url": stub.base_url(), "model": "stub", "backoff_ms": 1}
    }));
    let err = runner::run(&cfg, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, RunError::Sim { seed: 0, .. }), "{err}");
    let lines = read_log(&dir.path().join(EVENTS_FILE)).unwrap();
    assert!(matches!(
        lines.last().unwrap().event,
        Event::Abort { round: 1, .. }
    ));
    assert!(matches!(
        replay(&dir.path().join(EVENTS_FILE)),
        Err(ReplayError::Aborted { .. })
    ));
    assert!(!dir.path().join(SUMMARY_FILE).exists());
    // one original prompt plus two re-prompts, all kept for audit
    let transcript = fs::read_to_string(dir.path().join(TRANSCRIPT_FILE)).unwrap();
    assert_eq!(transcript.lines().count(), 3);
    assert_eq!(stub.hits(), 3);
}
