pub mod attack;
pub mod gen;
pub mod inspect;
pub mod metrics;
pub mod protect;
pub mod verify;

use std::path::Path;

use lorenc_core::container::{read_baseline, read_container, write_container, Container};
use lorenc_core::synth::SyntheticLayer;

use crate::error::{CliError, CliResult};

pub fn load(path: &Path) -> CliResult<Container> {
    read_container(path).map_err(|e| CliError::from_container(&path.display().to_string(), e))
}

pub fn save(path: &Path, container: &Container) -> CliResult<()> {
    write_container(path, container).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn load_baseline(path: &Path) -> CliResult<Vec<SyntheticLayer>> {
    let c = load(path)?;
    read_baseline(&c).map_err(|e| CliError::from_container(&path.display().to_string(), e))
}

/// Parses `"a,b"` into two positive integers.
pub fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated integers, got '{s}'"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("'{v}': {e}"))
            .and_then(|x| {
                if x == 0 {
                    Err("values must be positive".to_string())
                } else {
                    Ok(x)
                }
            })
    };
    Ok((parse(a)?, parse(b)?))
}
