use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Provenance written into every output file.
///
/// Output names are relative to the output directory, and the worker count
/// is left out, so identical runs give identical bytes wherever they write.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(subcommand: &'static str, seed: u64, config: &C, outputs: Vec<String>) -> Self {
        Self {
            tool: "piht",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            outputs,
        }
    }

    /// Comment preamble for CSV and text outputs.
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("tool: {} {}", self.tool, self.version),
            format!("subcommand: {}", self.subcommand),
            format!("seed: {}", self.seed),
            format!("config: {}", self.config),
            format!("outputs: {}", self.outputs.join(" ")),
        ]
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    /// Creates the directory and proves it is writable before any compute.
    pub fn prepare(root: &Path) -> Result<Self, CliError> {
        let fail = |e: std::io::Error| CliError::Runtime(format!("output directory {} is not writable: {e}", root.display()));
        fs::create_dir_all(root).map_err(fail)?;
        let probe = root.join(".piht-write-probe");
        fs::write(&probe, b"").map_err(fail)?;
        fs::remove_file(&probe).map_err(fail)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
