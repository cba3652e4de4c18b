use std::path::PathBuf;
use std::process::ExitCode;

use cartanlab::parallel::resolve_threads;
use cartanlab_cli::{error_payload, run_file};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cartanlab", version, about = "Compensated-compactness experiments on periodic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the CSV report and JSON summary.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to CARTANLAB_THREADS, then the core count.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, threads } => {
            match run_file(&config, &out, seed, resolve_threads(threads)) {
                Ok(outcome) => {
                    println!("verdict: {}", serde_json::to_value(outcome.verdict).unwrap_or_default().as_str().unwrap_or("?"));
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    eprintln!("{}", error_payload(&e));
                    ExitCode::from(1)
                }
            }
        }
    }
}
