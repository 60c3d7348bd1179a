//! Load a TOML experiment and run one command into a temporary directory.

use calderon_lab::experiment::{execute, Command, ExperimentConfig};

fn main() -> calderon_lab::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/quick.toml");
    let cfg = ExperimentConfig::load(&path)?;
    println!("loaded {} (seed {}, n = {})", path.display(), cfg.seed, cfg.n_axis);
    let out = std::env::temp_dir().join("calderon-lab-example");
    let outcome = execute(Command::Conductivity, &cfg, &out)?;
    println!("{} -> {:?}", outcome.summary, outcome.files);
    print!("{}", std::fs::read_to_string(&outcome.files[0])?);
    Ok(())
}
