use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cwmeter::cli::{run_file, Overrides, Scenario};

/// Curie-Weiss joint-measurement simulator.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// One of landscape, thresholds, dephase, register, povm, pipeline.
    scenario: Scenario,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock runtime in summaries (makes outputs non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let ov = Overrides { out: args.out, seed: args.seed };
    match run_file(args.scenario, &args.config, &ov, args.timing) {
        Ok(cfg) => {
            println!("{} done, artifacts in {}", args.scenario, cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cwmeter: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
