use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use safenav::simcli::{emit_outputs, read_scenario, run_scenario, RunMetrics, Scenario};
use safenav::Error;

/// Output directory override, used when `--out` is absent.
const OUT_ENV: &str = "SAFENAV_OUT";

#[derive(Parser)]
#[command(name = "safenav", version, about = "Run navigation, planning and exploration scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario over many seeds (and exploration probabilities) in parallel.
    Sweep {
        file: PathBuf,
        /// Number of seeds, starting at 0.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Comma-separated branching probabilities for exploration scenarios.
        #[arg(long, value_delimiter = ',')]
        q0: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the assumption checks.
    #[arg(long)]
    force: bool,
    /// Relax only the shortest candidate.
    #[arg(long)]
    fast_candidates: bool,
    /// Replace the sign switching with a saturated slope.
    #[arg(long)]
    smooth_control: bool,
}

enum Outcome {
    Done,
    Timeout,
    Failed,
}

fn outcome(m: &RunMetrics) -> Outcome {
    if m.failure.is_some() {
        Outcome::Failed
    } else if m.reached {
        Outcome::Done
    } else {
        Outcome::Timeout
    }
}

fn load(file: &Path, c: &Common) -> Result<Scenario, Error> {
    let mut s = read_scenario(file)?;
    if c.fast_candidates {
        s.planner.fast = true;
    }
    if c.smooth_control {
        s.planner.smooth = true;
    }
    if !c.force {
        let v = s.assumption_violations();
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
    }
    Ok(s)
}

fn out_dir(c: &Common, s: &Scenario) -> PathBuf {
    c.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| s.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(s.mode.name()))
}

fn summary(m: &RunMetrics) -> String {
    let t = m.completion_time.map_or("none".to_string(), |t| format!("{t:.2}"));
    let status = match outcome(m) {
        Outcome::Done => "ok".to_string(),
        Outcome::Timeout => "timeout".to_string(),
        Outcome::Failed => format!("failed ({})", m.failure.as_deref().unwrap_or("")),
    };
    format!("{status} steps {} time {t} length {:.2} min_clearance {:.3}", m.steps, m.path_length, m.min_clearance)
}

fn error_code(e: &Error) -> ExitCode {
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::InvalidArgument(_) => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn run_one(s: &Scenario, dir: &Path) -> Result<RunMetrics, Error> {
    let out = run_scenario(s)?;
    emit_outputs(&out, dir)?;
    Ok(out.metrics)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, seed, common } => {
            let mut s = match load(&file, &common) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return error_code(&e);
                }
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let dir = out_dir(&common, &s);
            match run_one(&s, &dir) {
                Ok(m) => {
                    println!("{} -> {}", summary(&m), dir.display());
                    match outcome(&m) {
                        Outcome::Done => ExitCode::SUCCESS,
                        Outcome::Timeout => ExitCode::from(2),
                        Outcome::Failed => ExitCode::from(1),
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    error_code(&e)
                }
            }
        }
        Command::Sweep { file, seeds, q0, common } => {
            let base = match load(&file, &common) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return error_code(&e);
                }
            };
            let root = out_dir(&common, &base);
            let qs: Vec<Option<f64>> = if q0.is_empty() { vec![None] } else { q0.iter().map(|q| Some(*q)).collect() };
            let jobs: Vec<(u64, Option<f64>)> = qs.iter().flat_map(|q| (0..seeds).map(move |k| (k, *q))).collect();
            let results: Vec<(String, Result<RunMetrics, Error>)> = jobs
                .par_iter()
                .map(|&(seed, q)| {
                    let mut s = base.clone();
                    s.seed = seed;
                    let name = match q {
                        Some(q) => {
                            s.explorer.q0 = q;
                            format!("q0_{q}_seed_{seed}")
                        }
                        None => format!("seed_{seed}"),
                    };
                    let dir = root.join(&name);
                    (name, run_one(&s, &dir))
                })
                .collect();
            let (mut failed, mut timed_out) = (false, false);
            for (name, r) in &results {
                match r {
                    Ok(m) => {
                        println!("{name}: {}", summary(m));
                        match outcome(m) {
                            Outcome::Done => {}
                            Outcome::Timeout => timed_out = true,
                            Outcome::Failed => failed = true,
                        }
                    }
                    Err(e) => {
                        println!("{name}: error {e}");
                        failed = true;
                    }
                }
            }
            let ok = results.iter().filter(|(_, r)| matches!(r, Ok(m) if m.reached)).count();
            println!("{ok}/{} runs reached or completed -> {}", results.len(), root.display());
            if failed {
                ExitCode::from(1)
            } else if timed_out {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
