use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use gradebal_cli::{default_workers, CliError, Command, RunConfig, Runner};

/// Class-balanced augmentation, training and evaluation for retinal image grading.
#[derive(Debug, Parser)]
#[command(name = "gradebal", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Pipeline stage to run.
    #[arg(long, value_enum)]
    command: Command,
    /// Threads for augmentation and feature extraction.
    #[arg(long, env = "GRADEBAL_WORKERS")]
    workers: Option<usize>,
    /// Progress messages on stderr.
    #[arg(long)]
    verbose: bool,
}

fn run(args: &Args) -> anyhow::Result<serde_json::Value> {
    let started = Instant::now();
    let cfg = RunConfig::load(&args.config)?;
    let runner = Runner::new(cfg, args.workers.unwrap_or_else(default_workers), args.verbose)?;
    runner
        .run(args.command)
        .with_context(|| format!("command `{}` failed", args.command.name()))?;
    Ok(serde_json::json!({
        "command": args.command.name(),
        "config_hash": runner.config_hash(),
        "out_dir": runner.config().paths.out_dir,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    }))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (code, mut body) = match err.downcast_ref::<CliError>() {
                Some(e) => (e.exit_code(), e.to_json()),
                None => (5, serde_json::json!({ "error": "ModuleError", "exit_code": 5 })),
            };
            body["message"] = serde_json::json!(format!("{err:#}"));
            eprintln!("{body}");
            ExitCode::from(code as u8)
        }
    }
}
