use std::path::PathBuf;
use std::process::ExitCode;

use calderon_lab::experiment::{execute, exit_code, Command, ExperimentConfig};
use calderon_lab::Error;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Forward,
    Probe,
    Reconstruct,
    Sweep,
    Conductivity,
    Selftest,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Forward => Command::Forward,
            Sub::Probe => Command::Probe,
            Sub::Reconstruct => Command::Reconstruct,
            Sub::Sweep => Command::Sweep,
            Sub::Conductivity => Command::Conductivity,
            Sub::Selftest => Command::Selftest,
        }
    }
}

/// Partial-data inverse problem experiments on the cube.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let cfg = match (&cli.config, cli.seed) {
        (Some(path), seed) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg
        }
        (None, Some(s)) => ExperimentConfig::with_seed(s),
        (None, None) => return Err(Error::Config("a seed is required (--seed or a config file)".into())),
    };
    if cli.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcome = pool.install(|| execute(cli.command.into(), &cfg, &out))?;
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    println!("{:?}: {} ({})", cli.command, if outcome.passed { "ok" } else { "FAILED" }, outcome.summary);
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
