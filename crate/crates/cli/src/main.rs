use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use floodmap_cli::{load_config, run_stage, Stage};

/// Flood extent and severity mapping from geotagged photos, one stage at a time.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Stage to run.
    #[arg(value_enum)]
    stage: Stage,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Proceed even when upstream artifacts are stale or unrecorded.
    #[arg(long)]
    force: bool,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = load_config(&args.config, args.seed).and_then(|cfg| run_stage(args.stage, &cfg, args.force));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("floodmap {}: {e}", args.stage.name());
            ExitCode::from(e.exit_code())
        }
    }
}
