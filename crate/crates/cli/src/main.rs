use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use slowfast_cli::{run, ExperimentConfig, RunError};

/// Runs slow-fast averaging, filtering and estimation experiments.
#[derive(Debug, Parser)]
#[command(name = "slowfast", version)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Shipped configuration: fig1 (estimation) or fig2 (most probable paths).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
}

fn load(args: &Args) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => unreachable!("clap requires one of --config, --preset"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match load(&args).and_then(|cfg| run(&cfg, args.force)) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("wrote {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
