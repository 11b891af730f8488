use std::path::{Path, PathBuf};

use serde::Serialize;

use qnet_core::Result;

/// Reproducibility record written into every run directory.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: C,
}

pub fn write_manifest<C: Serialize>(dir: &Path, subcommand: &str, config: C) -> Result<()> {
    let manifest = Manifest {
        tool: "qnet",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: subcommand.to_string(),
        config,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Creates the run directory (and parents). Contents are overwritten file
/// by file; stale files from other runs are the caller's concern.
pub fn ensure_run_dir(dir: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
