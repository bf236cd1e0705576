//! JSONL event log: writing, reading and integrity-checked replay.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{donation_payoff, investment_step, ir_payoff, market_payoff};
use crate::metrics::{
    aggregate_rows, csv_row, summarize, MetricsSummary, SummaryContext, CSV_COLUMNS,
};
use crate::model::{GossipMessage, Indexing, InteractionRecord, RoundActions};
use crate::sim::{Event, GameSpec};
use crate::TOLERANCE;

pub const SCHEMA_VERSION: u32 = 1;

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub schema: u32,
    pub seq: u64,
    pub seed: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("seq jumps from {expected} to {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("seed {0}: log is incomplete (missing run_start or run_end)")]
    ReplayIncomplete(u64),
    #[error("seed {seed} aborted in round {round}: {reason}")]
    Aborted {
        seed: u64,
        round: u32,
        reason: String,
    },
    #[error("seed {seed}, round {round}: {message}")]
    Integrity {
        seed: u64,
        round: u32,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Sequenced writer; `seq` runs across every seed in the file.
#[derive(Debug, Default)]
pub struct EventLog {
    pub lines: Vec<LogLine>,
}

impl EventLog {
    pub fn extend(&mut self, seed: u64, events: impl IntoIterator<Item = Event>) {
        for event in events {
            let seq = self.lines.len() as u64;
            self.lines.push(LogLine {
                schema: SCHEMA_VERSION,
                seq,
                seed,
                event,
            });
        }
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        for line in &self.lines {
            serde_json::to_writer(&mut *out, line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogLine>, ReplayError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| ReplayError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if parsed.schema != SCHEMA_VERSION {
            return Err(ReplayError::Schema(parsed.schema));
        }
        out.push(parsed);
    }
    Ok(out)
}

/// Reconstructed state of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedRun {
    pub experiment: String,
    pub seed: u64,
    pub game: GameSpec,
    pub n_agents: usize,
    pub gamma: f64,
    pub indexing: Indexing,
    pub records: Vec<InteractionRecord>,
    pub messages: Vec<GossipMessage>,
    pub final_resources: Vec<f64>,
}

impl ReplayedRun {
    pub fn summary(&self) -> MetricsSummary {
        let ctx = SummaryContext {
            n_agents: self.n_agents,
            gamma: self.gamma,
            indexing: self.indexing,
        };
        summarize(&self.records, &self.messages, &ctx)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE
}

fn recompute_rewards(game: &GameSpec, record: &InteractionRecord) -> Result<(f64, f64), String> {
    match (game, record.actions) {
        (GameSpec::Donation(p), RoundActions::Donation { action }) => {
            Ok(donation_payoff(action, p))
        }
        (GameSpec::Ir(p), RoundActions::Simultaneous { actions: [x, y] }) => Ok(ir_payoff(x, y, p)),
        (GameSpec::Investment(p), RoundActions::Investment { invested, returned }) => {
            investment_step(invested, returned, record.resources_before[0], p)
                .map_err(|e| e.to_string())
        }
        (GameSpec::Market(p), RoundActions::Market { quality, purchase }) => {
            Ok(market_payoff(quality, purchase, p))
        }
        (g, a) => Err(format!("{} game cannot produce actions {a:?}", g.name())),
    }
}

/// Check every invariant of a log and rebuild each seed's records and
/// messages. Seeds come back in order of first appearance.
pub fn replay_lines(lines: &[LogLine]) -> Result<Vec<ReplayedRun>, ReplayError> {
    for (i, line) in lines.iter().enumerate() {
        if line.seq != i as u64 {
            return Err(ReplayError::Sequence {
                expected: i as u64,
                found: line.seq,
            });
        }
    }
    let mut order: Vec<u64> = Vec::new();
    let mut by_seed: BTreeMap<u64, Vec<&Event>> = BTreeMap::new();
    for line in lines {
        if !by_seed.contains_key(&line.seed) {
            order.push(line.seed);
        }
        by_seed.entry(line.seed).or_default().push(&line.event);
    }
    order
        .iter()
        .map(|seed| replay_seed(*seed, &by_seed[seed]))
        .collect()
}

fn replay_seed(seed: u64, events: &[&Event]) -> Result<ReplayedRun, ReplayError> {
    let Some(Event::RunStart {
        experiment,
        game,
        n_agents,
        gamma,
        indexing,
        ..
    }) = events.first().copied()
    else {
        return Err(ReplayError::ReplayIncomplete(seed));
    };
    let fail = |round: u32, message: String| ReplayError::Integrity {
        seed,
        round,
        message,
    };
    let mut ledger = vec![game.endowment(); *n_agents];
    let mut records: Vec<InteractionRecord> = Vec::new();
    let mut messages: Vec<GossipMessage> = Vec::new();
    let mut last_round = 0u32;
    let mut final_resources = None;
    for event in &events[1..] {
        if final_resources.is_some() {
            return Err(fail(last_round, "events after run_end".into()));
        }
        match event {
            Event::Abort { round, reason } => {
                return Err(ReplayError::Aborted {
                    seed,
                    round: *round,
                    reason: reason.clone(),
                })
            }
            Event::RunStart { .. } => {
                return Err(fail(
                    last_round,
                    "second run_start for the same seed".into(),
                ))
            }
            Event::Step { record } => {
                let r = record.round;
                if r < last_round {
                    return Err(fail(r, format!("round goes backwards from {last_round}")));
                }
                last_round = r;
                let [a, b] = record.participants;
                if a >= *n_agents || b >= *n_agents || a == b {
                    return Err(fail(r, format!("bad participants {a}, {b}")));
                }
                for (slot, agent) in [a, b].into_iter().enumerate() {
                    if !close(record.resources_before[slot], ledger[agent]) {
                        return Err(fail(
                            r,
                            format!(
                                "agent {agent} starts with {} but the ledger holds {}",
                                record.resources_before[slot], ledger[agent]
                            ),
                        ));
                    }
                    if !close(
                        record.resources_after[slot],
                        record.resources_before[slot] + record.rewards[slot],
                    ) {
                        return Err(fail(r, format!("agent {agent}: after != before + reward")));
                    }
                }
                let (r0, r1) = recompute_rewards(game, record).map_err(|m| fail(r, m))?;
                if !close(r0, record.rewards[0]) || !close(r1, record.rewards[1]) {
                    return Err(fail(
                        r,
                        format!("rewards {:?} but actions give ({r0}, {r1})", record.rewards),
                    ));
                }
                ledger[a] = record.resources_after[0];
                ledger[b] = record.resources_after[1];
                records.push(record.clone());
            }
            Event::Publish { index, message } => {
                if *index != messages.len() {
                    return Err(fail(
                        message.round,
                        format!("publish index {index}, expected {}", messages.len()),
                    ));
                }
                messages.push(message.clone());
            }
            Event::RunEnd {
                final_resources: fr,
            } => {
                if fr.len() != ledger.len() || fr.iter().zip(&ledger).any(|(x, y)| !close(*x, *y)) {
                    return Err(fail(
                        last_round,
                        "final resources disagree with the ledger".into(),
                    ));
                }
                final_resources = Some(fr.clone());
            }
            _ => {}
        }
    }
    let Some(final_resources) = final_resources else {
        return Err(ReplayError::ReplayIncomplete(seed));
    };
    Ok(ReplayedRun {
        experiment: experiment.clone(),
        seed,
        game: *game,
        n_agents: *n_agents,
        gamma: *gamma,
        indexing: *indexing,
        records,
        messages,
        final_resources,
    })
}

pub fn replay_file(path: &Path) -> Result<Vec<ReplayedRun>, ReplayError> {
    replay_lines(&read_log(path)?)
}

/// Per-seed rows followed by the mean and standard-error rows.
pub fn summary_csv(
    experiment: &str,
    runs: &[(u64, MetricsSummary)],
) -> Result<String, ReplayError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for (seed, s) in runs {
        w.write_record(csv_row(experiment, &seed.to_string(), s))?;
    }
    let summaries: Vec<MetricsSummary> = runs.iter().map(|(_, s)| s.clone()).collect();
    for row in aggregate_rows(experiment, &summaries) {
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Summary CSV recomputed from replayed runs.
pub fn replay_csv(runs: &[ReplayedRun]) -> Result<String, ReplayError> {
    let experiment = runs
        .first()
        .map(|r| r.experiment.as_str())
        .unwrap_or_default();
    let rows: Vec<(u64, MetricsSummary)> = runs.iter().map(|r| (r.seed, r.summary())).collect();
    summary_csv(experiment, &rows)
}
