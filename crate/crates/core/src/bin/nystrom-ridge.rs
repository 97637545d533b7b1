use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nystrom_ridge::cli::{self, ExperimentConfig, ExperimentKind, Overrides};

/// Run kernel ridge regression sketching experiments from a TOML config.
#[derive(Parser, Debug)]
#[command(name = "nystrom-ridge", version)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Run only this experiment.
    #[arg(long, value_name = "NAME")]
    experiment: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nystrom-ridge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, cli::CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let overrides = Overrides {
        experiment: args.experiment.as_deref().map(str::parse::<ExperimentKind>).transpose()?,
        seed: args.seed,
        output_dir: args.out.clone(),
        trials: args.trials,
    };
    overrides.apply(&mut cfg)?;
    cli::run(&cfg)
}
