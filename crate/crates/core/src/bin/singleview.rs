//! Command-line front end: `simulate`, `run`, `evaluate` and `detect-moves`.
//!
//! Failures print a JSON error record on stderr and exit with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use singleview::pipeline::{
    detect_moves_dir, evaluate_dirs, read_json, render_to_dir, run_dirs, write_json, PipelineConfig, PipelineError,
    Record, WORKERS_ENV,
};
use singleview::simulator::{builtin_scenario, Scenario};

#[derive(Parser)]
#[command(
    name = "singleview",
    version,
    about = "Virtual single-view video from a multi-camera rig"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario to per-camera frame directories plus ground truth.
    Simulate {
        /// Scenario JSON file or built-in name.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full pipeline.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute ITF and AvSpeed of a video, optionally against a baseline.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Also write per-transition PSNR and displacement.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Movement detection only; prints the movement events.
    DetectMoves {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => PipelineConfig::from_json_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, PipelineError> {
    let path = Path::new(arg);
    if path.is_file() {
        let s: Scenario = read_json(path)?;
        s.validate()?;
        Ok(s)
    } else {
        Ok(builtin_scenario(arg)?)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let s = load_scenario(&scenario)?;
            let gt = render_to_dir(&s, seed, &out)?;
            println!(
                "{}",
                json!({ "scenario": s.name, "frames": s.duration, "cameras": s.camera_count(), "rig_move_frames": gt.rig_move_frames })
            );
        }
        Command::Run { config, input, out } => {
            let cfg = load_config(config.as_deref())?;
            let res = run_dirs(&cfg, &input, &out)?;
            println!(
                "{}",
                json!({
                    "frames": res.log.frames,
                    "movements": res.log.movement_events().iter().map(|e| e.t_c).collect::<Vec<_>>(),
                    "rehoming": res.log.rehoming_times(),
                    "segments": res.schedule.segments.len(),
                })
            );
        }
        Command::Evaluate {
            input,
            baseline,
            report,
            trace,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let (rep, tr) = evaluate_dirs(&cfg, &input, baseline.as_deref())?;
            write_json(&report, &rep)?;
            if let Some(t) = trace {
                write_json(&t, &tr)?;
            }
            println!("{}", serde_json::to_string(&rep).unwrap_or_default());
        }
        Command::DetectMoves { config, input } => {
            let cfg = load_config(config.as_deref())?;
            let log = detect_moves_dir(&cfg, &input)?;
            let moves: Vec<_> = log
                .records
                .iter()
                .filter_map(|r| match r {
                    Record::Movement { event, .. } => Some(event),
                    _ => None,
                })
                .collect();
            println!("{}", json!({ "movements": moves, "rehoming": log.rehoming_times() }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
