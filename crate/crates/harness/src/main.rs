use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use symvi::config::EXPERIMENTS;
use symvi::{checks, emit, run, ExperimentConfig, Format, HarnessError};

#[derive(Parser)]
#[command(name = "symvi", version, about = "Variational inference symmetry experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its result files.
    Run {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output`, then `out/<kind>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// List the experiment kinds.
    ListExperiments,
    /// Run the numerical-contract suite.
    Check,
}

fn run_command(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, format: Format) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::from_file(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.kind()));
    let result = run(&cfg)?;
    for path in emit(&result, &dir, format)? {
        println!("wrote {}", path.display());
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} finished in {:.1} s", result.experiment, result.wall_clock_seconds);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, format } => match run_command(config, seed, out, format) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<22}{about}");
            }
            ExitCode::SUCCESS
        }
        Command::Check => {
            let outcomes = checks::run_all();
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            for o in &outcomes {
                println!("{} {} ({})", if o.passed { "ok  " } else { "FAIL" }, o.name, o.detail);
            }
            println!("{} checks, {failed} failed", outcomes.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
    }
}
