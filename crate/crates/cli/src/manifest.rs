use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::commands::Command;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "run.json";

/// Everything needed to regenerate a run's files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub timestamp: String,
    pub seed: u64,
    pub command: Command,
    pub config: RunConfig,
    /// Raw command line of the original invocation, for reference only.
    pub args: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
        if m.seed != m.config.seed {
            return Err(CliError::Manifest(format!(
                "seed {} disagrees with config seed {}",
                m.seed, m.config.seed
            )));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
