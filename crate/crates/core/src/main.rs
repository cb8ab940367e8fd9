use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use richrep::cli::verify::{run_suites, Hooks};
use richrep::cli::{exit_code, render, run_config, schema_json, ExperimentConfig, Overrides, ReportKind, VERSION};
use richrep::experiments::read_csv;

#[derive(Parser)]
#[command(name = "richrep", version = VERSION, about = "Rich-representation experiments and probing checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Table,
    Summary,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a JSON config.
    Run {
        config: PathBuf,
        /// Override master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cap on worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Render a results CSV as markdown.
    Report {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Table)]
        kind: Kind,
    },
    /// Print the JSON schema of experiment configs.
    Schema,
    /// Run the probing property suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, out, jobs } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_config(cfg, &Overrides { seed, out, jobs }) {
                Ok(dir) => {
                    println!("wrote {}", dir.join("results.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e) as u8)
                }
            }
        }
        Command::Report { csv, kind } => {
            let records = std::fs::File::open(&csv)
                .map_err(|e| e.to_string())
                .and_then(|f| read_csv(std::io::BufReader::new(f)).map_err(|e| e.to_string()));
            match records {
                Ok(r) => {
                    let kind = match kind {
                        Kind::Table => ReportKind::Table,
                        Kind::Summary => ReportKind::Summary,
                    };
                    print!("{}", render(&r, kind));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", csv.display());
                    ExitCode::from(2)
                }
            }
        }
        Command::Schema => {
            print!("{}", schema_json());
            ExitCode::SUCCESS
        }
        Command::Verify { seed } => match run_suites(seed, &Hooks::default()) {
            Ok(results) => {
                let mut failed = Vec::new();
                for r in &results {
                    let tag = if r.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {:<20} {} instances; {}", r.name, r.instances, r.detail);
                    if !r.passed {
                        failed.push(r.name);
                    }
                }
                if failed.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("failed: {}", failed.join(", "));
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        },
    }
}
