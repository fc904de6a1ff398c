use clap::{Parser, Subcommand};
use so3ndi::sim::certify::certify;
use so3ndi::sim::config::{load_scenario, ScenarioConfig};
use so3ndi::sim::{compare, comparison_table, run};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exit code for unreadable or invalid scenario files.
const EXIT_CONFIG: u8 = 2;
/// Exit code of `run` when the simulation diverged.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "so3ndi", version, about = "Geometric NDI attitude control: certification and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-loop Hurwitz test, attitude and cascade LMIs, bandwidth ratios.
    Certify { config: PathBuf },
    /// Simulate one scenario and write `<name>.csv` and `<name>.summary.txt`.
    Run {
        config: PathBuf,
        /// Output directory (default: `output.dir` from the scenario, else `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run scenarios in parallel and print their summaries side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        /// Also write every run's outputs here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    load_scenario(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Certify { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match certify(&cfg) {
                Ok(report) => {
                    print!("{report}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Run { config, out } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let result = match run(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let dir = out.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            match result.write(&dir) {
                Ok((csv, txt)) => eprintln!("wrote {} and {}", csv.display(), txt.display()),
                Err(e) => {
                    eprintln!("cannot write outputs to {}: {e}", dir.display());
                    return ExitCode::FAILURE;
                }
            }
            print!("{}", result.summary);
            if result.summary.unstable() {
                ExitCode::from(EXIT_DIVERGED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Compare { configs, out } => {
            let mut cfgs = Vec::with_capacity(configs.len());
            for p in &configs {
                match load(p) {
                    Ok(c) => cfgs.push(c),
                    Err(code) => return code,
                }
            }
            let results = match compare(&cfgs) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(dir) = out {
                for r in &results {
                    if let Err(e) = r.write(&dir) {
                        eprintln!("cannot write outputs to {}: {e}", dir.display());
                        return ExitCode::FAILURE;
                    }
                }
            }
            print!("{}", comparison_table(&results));
            ExitCode::SUCCESS
        }
    }
}
