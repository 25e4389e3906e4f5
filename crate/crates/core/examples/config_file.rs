//! Prints the default experiment configuration as TOML, the format accepted
//! by `jet --config`.

use jet::cli::ExperimentConfig;

fn main() -> jet::Result<()> {
    print!("{}", ExperimentConfig::default().to_toml()?);
    Ok(())
}
