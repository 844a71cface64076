//! Load a TOML experiment and run the spectrum command into a directory.
//!
//! `cargo run --release --example config_run -- configs/spectrum.toml /tmp/out`
use std::path::PathBuf;

use gibbsforge::cli::{cmd_spectrum_to, Format};
use gibbsforge::config::ExperimentConfig;

fn main() -> gibbsforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = match args.next() {
        Some(path) => ExperimentConfig::load(PathBuf::from(path).as_path())?,
        None => {
            let mut c = ExperimentConfig::from_toml_str("[lattice]\nlength = 12\nup_count = 3\n")?;
            c.name = "inline".into();
            c
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("gibbsforge_spectrum"));
    cmd_spectrum_to(&config, &out, &[Format::Csv, Format::Json, Format::Svg])?;
    println!("{}", config.to_toml());
    println!("wrote {}", out.display());
    Ok(())
}
