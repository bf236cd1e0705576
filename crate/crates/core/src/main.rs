use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use gossipnet::equilibrium::{
    one_shot_deviation_check, CheckScope, EvalMode, MatrixGame, MatrixKind, Profile,
};
use gossipnet::runner::{self, RunConfig, RunOptions};
use gossipnet::scheduler::{
    bipartite_schedule, donation_schedule, partition_schedule, simultaneous_schedule,
    MarketMatching, Schedule, ScheduleMode,
};

#[derive(Parser)]
#[command(
    name = "gossipnet",
    version,
    about = "Gossip-driven indirect reciprocity simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and write its artifacts.
    Run {
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Validate the config and build schedules, then stop.
        #[arg(long)]
        dry_run: bool,
        /// Write artifacts here instead of the configured output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a log's integrity and recompute its summary.
    Replay { log: PathBuf },
    /// One-shot deviation table for a profile, e.g. `gamma=0.9 b=5 c=1 grim`.
    VerifyEquilibrium {
        /// key=value settings (gamma|γ, b, c, game, mode, t_check, scope) followed by the profile name.
        #[arg(required = true, num_args = 1..)]
        args: Vec<String>,
    },
    /// Print a schedule and validate its invariants.
    ScheduleCheck {
        mode: String,
        n: usize,
        rounds: usize,
        seed: u64,
    },
    /// Print the summary CSV recomputed from a log.
    Metrics { log: PathBuf },
}

fn parse_mode(s: &str) -> Result<ScheduleMode, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown schedule mode '{s}'"))
}

fn schedule_for(
    mode: ScheduleMode,
    n: usize,
    rounds: usize,
    seed: u64,
) -> Result<Schedule, String> {
    let r = match mode {
        ScheduleMode::Donation => donation_schedule(n, rounds, seed),
        ScheduleMode::Simultaneous => simultaneous_schedule(n, rounds, seed),
        ScheduleMode::Partition => partition_schedule(n, rounds, seed, false),
        ScheduleMode::PartitionAlternating => partition_schedule(n, rounds, seed, true),
        ScheduleMode::BipartiteSingle | ScheduleMode::BipartiteFull => {
            // first half sellers, rest buyers
            let sellers: Vec<usize> = (0..n / 2).collect();
            let buyers: Vec<usize> = (n / 2..n).collect();
            let matching = if mode == ScheduleMode::BipartiteFull {
                MarketMatching::FullMatching
            } else {
                MarketMatching::SingleDyad
            };
            bipartite_schedule(&sellers, &buyers, rounds, seed, matching)
        }
    };
    r.map_err(|e| e.to_string())
}

fn schedule_check(mode: &str, n: usize, rounds: usize, seed: u64) -> Result<bool, String> {
    let mode = parse_mode(mode)?;
    let schedule = schedule_for(mode, n, rounds, seed)?;
    for r in &schedule.rounds {
        let pairs: Vec<String> = r
            .pairs
            .iter()
            .map(|p| format!("({},{})", p.first, p.second))
            .collect();
        let idle = if r.idle.is_empty() {
            String::new()
        } else {
            format!("  idle {:?}", r.idle)
        };
        println!("round {:>3}: {}{idle}", r.round, pairs.join(" "));
    }
    if mode.alternates_roles() {
        for (agent, seq) in schedule.role_sequences().iter().enumerate() {
            println!("agent {agent}: {}", seq.iter().collect::<String>());
        }
    }
    match schedule.validate() {
        Ok(()) => {
            println!("ok");
            Ok(true)
        }
        Err(problems) => {
            for p in problems {
                println!("violation: {p}");
            }
            Ok(false)
        }
    }
}

fn verify_equilibrium(args: &[String]) -> Result<bool, String> {
    let (mut gamma, mut b, mut c) = (0.99, 5.0, 1.0);
    let mut kind = MatrixKind::Donation;
    let mut mode = EvalMode::ClosedForm;
    let mut scope = CheckScope::OwnDeviations;
    let mut profile = None;
    let num =
        |k: &str, v: &str| f64::from_str(v).map_err(|_| format!("{k}: '{v}' is not a number"));
    for arg in args {
        let Some((k, v)) = arg.split_once('=') else {
            if profile
                .replace(Profile::from_str(arg).map_err(|e| e.to_string())?)
                .is_some()
            {
                return Err("more than one profile given".into());
            }
            continue;
        };
        match k {
            "gamma" | "γ" => gamma = num(k, v)?,
            "b" => b = num(k, v)?,
            "c" => c = num(k, v)?,
            "game" => {
                kind = match v {
                    "donation" => MatrixKind::Donation,
                    "ir" => MatrixKind::Ir,
                    _ => return Err(format!("game must be donation or ir, got '{v}'")),
                }
            }
            "mode" => {
                mode = match v {
                    "closed_form" => EvalMode::ClosedForm,
                    "truncated" => EvalMode::Truncated { t_check: 200 },
                    _ => return Err(format!("mode must be closed_form or truncated, got '{v}'")),
                }
            }
            "t_check" => {
                let t = v
                    .parse()
                    .map_err(|_| format!("t_check: '{v}' is not a count"))?;
                mode = EvalMode::Truncated { t_check: t };
            }
            "scope" => {
                scope = match v {
                    "own_deviations" => CheckScope::OwnDeviations,
                    "all_states" => CheckScope::AllStates,
                    _ => {
                        return Err(format!(
                            "scope must be own_deviations or all_states, got '{v}'"
                        ))
                    }
                }
            }
            _ => return Err(format!("unknown setting '{k}'")),
        }
    }
    let profile = profile.ok_or("no profile given")?;
    let game = MatrixGame {
        kind,
        benefit: b,
        cost: c,
        gamma,
    };
    let reports =
        one_shot_deviation_check(profile, &game, mode, scope).map_err(|e| e.to_string())?;
    println!(
        "{:<14} {:<36} {:>14} {:>14} {:>14} {:>6}",
        "profile", "state", "path", "deviation", "margin", "spe"
    );
    for r in &reports {
        println!(
            "{:<14} {:<36} {:>14.6} {:>14.6} {:>14.6} {:>6}",
            r.label, r.state, r.value_cooperate_path, r.value_deviation, r.margin, r.spe_holds
        );
    }
    if let Some(r) = reports.first() {
        println!("assumptions: {}", r.assumptions);
        if let Some(t) = r.tail_bound {
            println!("tail bound: {t:.3e}");
        }
    }
    Ok(reports.iter().all(|r| r.spe_holds))
}

fn execute(cmd: Command) -> Result<bool, String> {
    match cmd {
        Command::Run {
            config,
            seed_override,
            dry_run,
            output_dir,
        } => {
            let mut cfg = RunConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let report = runner::run(
                &cfg,
                &RunOptions {
                    seed_override,
                    dry_run,
                },
            )
            .map_err(|e| e.to_string())?;
            if dry_run {
                println!("config ok; {} seed(s) schedulable", report.seeds.len());
            } else {
                print!("{}", report.csv);
                eprintln!("artifacts written to {}", report.output_dir.display());
            }
            Ok(true)
        }
        Command::Replay { log } => {
            let report = runner::replay(&log).map_err(|e| e.to_string())?;
            for run in &report.runs {
                let s = run.summary();
                println!(
                    "seed {}: {} steps, {} messages, cooperation {}, discounted return {:.6}",
                    run.seed,
                    run.records.len(),
                    run.messages.len(),
                    s.cooperation_ratio
                        .map_or("n/a".to_string(), |c| format!("{c:.4}")),
                    s.discounted_return_mean
                );
            }
            match report.csv_matches {
                Some(true) => println!("summary.csv reproduced exactly"),
                Some(false) => {
                    println!("summary.csv differs from the replayed summary");
                    return Ok(false);
                }
                None => println!("no summary.csv next to the log"),
            }
            Ok(true)
        }
        Command::VerifyEquilibrium { args } => verify_equilibrium(&args),
        Command::ScheduleCheck {
            mode,
            n,
            rounds,
            seed,
        } => schedule_check(&mode, n, rounds, seed),
        Command::Metrics { log } => {
            let runs = runner::replay_file(&log).map_err(|e| e.to_string())?;
            print!("{}", runner::replay_csv(&runs).map_err(|e| e.to_string())?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
