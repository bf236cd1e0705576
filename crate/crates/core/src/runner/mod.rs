//! Experiment orchestration: config in, event log and summary CSV out.

pub mod config;
pub mod log;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use self::config::{AgentSpec, ConfigError, MarketRole, PolicySpec, RunConfig};
pub use self::log::{
    read_log, replay_csv, replay_file, replay_lines, summary_csv, EventLog, LogLine, ReplayError,
    ReplayedRun,
};

use crate::llm::agent::GameInfo;
use crate::llm::{HttpChatClient, LlmAgent, LlmError, TranscriptEntry};
use crate::metrics::{summarize, MetricsSummary, SummaryContext};
use crate::scheduler::{
    bipartite_schedule, donation_schedule, partition_schedule, simultaneous_schedule, Schedule,
    ScheduleError, ScheduleMode,
};
use crate::sim::{simulate, Event, SimError, SimLog};
use crate::strategy::AgentPolicy;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Schedule {
        seed: u64,
        #[source]
        source: ScheduleError,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("seed {seed}: {source}")]
    Sim {
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Output(#[from] ReplayError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run just this seed instead of the configured list.
    pub seed_override: Option<u64>,
    /// Validate and build schedules without playing or writing anything.
    pub dry_run: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub summaries: Vec<(u64, MetricsSummary)>,
    pub csv: String,
}

/// Schedule for one seed of a validated config.
pub fn build_schedule(
    cfg: &RunConfig,
    agents: &[AgentSpec],
    seed: u64,
) -> Result<Schedule, ScheduleError> {
    let n = agents.len();
    let t = cfg.rounds as usize;
    match cfg.schedule_mode() {
        ScheduleMode::Donation => donation_schedule(n, t, seed),
        ScheduleMode::Simultaneous => simultaneous_schedule(n, t, seed),
        ScheduleMode::Partition => partition_schedule(n, t, seed, false),
        ScheduleMode::PartitionAlternating => partition_schedule(n, t, seed, true),
        ScheduleMode::BipartiteSingle | ScheduleMode::BipartiteFull => {
            let ids = |role| {
                agents
                    .iter()
                    .enumerate()
                    .filter(move |(_, a)| a.role == Some(role))
                    .map(|(i, _)| i)
            };
            let sellers: Vec<usize> = ids(MarketRole::Seller).collect();
            let buyers: Vec<usize> = ids(MarketRole::Buyer).collect();
            bipartite_schedule(&sellers, &buyers, t, seed, cfg.market_matching())
        }
    }
}

/// Fresh policies for one seed.
pub fn build_policies(
    cfg: &RunConfig,
    agents: &[AgentSpec],
) -> Result<Vec<Box<dyn AgentPolicy>>, RunError> {
    let info = GameInfo {
        game: cfg.game_spec()?,
        horizon: cfg.horizon_type.into(),
        horizon_length: cfg.rounds,
        gamma: cfg.gamma,
        names: agents.iter().map(|a| a.name.clone()).collect(),
        protocol: cfg.protocol(),
    };
    agents
        .iter()
        .enumerate()
        .map(|(id, a)| -> Result<Box<dyn AgentPolicy>, RunError> {
            Ok(match &a.policy {
                PolicySpec::Scripted(p) => Box::new(p.clone()),
                PolicySpec::Llm(flags) => {
                    let endpoint = cfg.endpoint.clone().ok_or_else(|| {
                        ConfigError::Invalid("llm policies need an endpoint".into())
                    })?;
                    Box::new(LlmAgent::new(
                        id,
                        info.clone(),
                        *flags,
                        Box::new(HttpChatClient::new(endpoint)?),
                    ))
                }
            })
        })
        .collect()
}

/// Outcome of one seed: its events and, unless it aborted, its summary.
pub struct SeedRun {
    pub seed: u64,
    pub log: SimLog,
    pub result: Result<MetricsSummary, SimError>,
}

pub fn run_seed(
    cfg: &RunConfig,
    agents: &[AgentSpec],
    schedule: &Schedule,
    seed: u64,
) -> Result<SeedRun, RunError> {
    let sim_cfg = cfg.sim_config()?;
    let mut policies = build_policies(cfg, agents)?;
    let mut log = SimLog::default();
    log.events.push(Event::RunStart {
        experiment: cfg.name.clone(),
        game: sim_cfg.game,
        n_agents: agents.len(),
        rounds: cfg.rounds,
        gamma: cfg.gamma,
        indexing: cfg.indexing,
        names: agents.iter().map(|a| a.name.clone()).collect(),
        policies: policies.iter().map(|p| p.label()).collect(),
    });
    let result = simulate(&sim_cfg, schedule, &mut policies, &mut log).map(|outcome| {
        let ctx = SummaryContext {
            n_agents: agents.len(),
            gamma: cfg.gamma,
            indexing: cfg.indexing,
        };
        summarize(&outcome.records, &outcome.messages, &ctx)
    });
    if let Err(e) = &result {
        log.events.push(Event::Abort {
            round: e.round(),
            reason: e.to_string(),
        });
    }
    Ok(SeedRun { seed, log, result })
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    seed: u64,
    #[serde(flatten)]
    entry: &'a TranscriptEntry,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), RunError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Validate, schedule every seed up front, play them in order and write the
/// outputs. A failed seed stops the run; everything logged up to the failure
/// is still written.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let agents = cfg.agents()?;
    let seeds = match opts.seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let schedules = seeds
        .iter()
        .map(|&seed| {
            build_schedule(cfg, &agents, seed).map_err(|source| RunError::Schedule { seed, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dir = cfg.output_dir.clone();
    if opts.dry_run {
        return Ok(RunReport {
            output_dir: dir,
            seeds,
            summaries: Vec::new(),
            csv: String::new(),
        });
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join(CONFIG_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, cfg)?;
        w.write_all(b"\n")
    })?;

    let mut events = EventLog::default();
    let mut transcripts: Vec<(u64, TranscriptEntry)> = Vec::new();
    let mut summaries = Vec::new();
    let mut failure = None;
    for (&seed, schedule) in seeds.iter().zip(&schedules) {
        ::log::info!("{}: seed {seed}", cfg.name);
        let run = run_seed(cfg, &agents, schedule, seed)?;
        events.extend(seed, run.log.events);
        transcripts.extend(run.log.transcripts.into_iter().map(|t| (seed, t)));
        match run.result {
            Ok(s) => summaries.push((seed, s)),
            Err(source) => {
                failure = Some(RunError::Sim { seed, source });
                break;
            }
        }
    }

    let events_path = dir.join(EVENTS_FILE);
    write_file(&events_path, |w| events.write_to(w))?;
    if agents
        .iter()
        .any(|a| matches!(a.policy, PolicySpec::Llm(_)))
    {
        write_file(&dir.join(TRANSCRIPT_FILE), |w| {
            for (seed, entry) in &transcripts {
                serde_json::to_writer(&mut *w, &TranscriptLine { seed: *seed, entry })?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let csv = summary_csv(&cfg.name, &summaries)?;
    write_file(&dir.join(SUMMARY_FILE), |w| w.write_all(csv.as_bytes()))?;
    Ok(RunReport {
        output_dir: dir,
        seeds,
        summaries,
        csv,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub runs: Vec<ReplayedRun>,
    pub csv: String,
    /// Whether the stored `summary.csv` next to the log matches; `None` when
    /// there is none.
    pub csv_matches: Option<bool>,
}

/// Replay a log and compare the recomputed summary with the stored one.
pub fn replay(log_path: &Path) -> Result<ReplayReport, ReplayError> {
    let runs = replay_file(log_path)?;
    let csv = replay_csv(&runs)?;
    let stored = log_path
        .parent()
        .map(|d| d.join(SUMMARY_FILE))
        .filter(|p| p.exists());
    let csv_matches = match stored {
        Some(p) => Some(fs::read_to_string(p)? == csv),
        None => None,
    };
    Ok(ReplayReport {
        runs,
        csv,
        csv_matches,
    })
}
