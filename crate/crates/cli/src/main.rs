use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hermiton_cli::{run_file, Command};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "hermiton", version, about = "Simulate and verify Schrödinger-type systems with a dynamical scalar product")]
struct Args {
    command: Command,
    /// Scenario file; repeat for a batch.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scenarios run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the seed of every scenario.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_logging() {
    let level = std::env::var("HERMITON_LOG").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" | "info" | "debug" => level.as_str(),
        other => {
            eprintln!("HERMITON_LOG={other:?} is not one of error, info, debug; using error");
            "error"
        }
    };
    env_logger::Builder::new().parse_filters(filter).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let args = Args::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let results: Vec<_> = pool.install(|| {
        args.scenario.par_iter().map(|path| run_file(args.command, path, &args.out, args.seed)).collect()
    });

    let mut code = 0;
    for (path, result) in args.scenario.iter().zip(results) {
        match result {
            Ok(outcome) => {
                let mut report = outcome.report;
                report["scenario"] = serde_json::json!(path.display().to_string());
                println!("{report}");
                code = code.max(outcome.exit_code);
            }
            Err(e) => {
                eprintln!("{} {}: {e}", args.command.name(), path.display());
                code = code.max(e.exit_code());
            }
        }
    }
    ExitCode::from(code as u8)
}
