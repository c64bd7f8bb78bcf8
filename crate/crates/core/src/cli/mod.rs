//! Config-driven scenario runner used by the `cwmeter` binary.

pub mod config;
pub mod output;
pub mod scenario;

use std::path::Path;

pub use config::{parse_config, ConfigError, Overrides, RunConfig, Scenario};
pub use scenario::{run, RunError};

/// Reads `path`, resolves it for `scenario` and runs it.
pub fn run_file(scenario: Scenario, path: &Path, ov: &Overrides, timing: bool) -> Result<RunConfig, RunError> {
    let src = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&src, scenario, ov).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    run(&cfg, timing)?;
    Ok(cfg)
}
