use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// File name inside the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one simulation run. Equal scenario hashes imply equal output
/// hashes; `timing_s` is the only field that varies between such runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub label: String,
    pub scenario_hash: String,
    pub outputs: Vec<OutputFile>,
    pub timing_s: f64,
    pub stable: bool,
    pub failure_time: Option<f64>,
    pub failure: Option<String>,
    pub steps: usize,
    pub body_weight: f64,
}

impl RunManifest {
    pub fn output(&self, name: &str) -> Option<&OutputFile> {
        self.outputs.iter().find(|o| o.path == name)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `dir/name` and returns its manifest entry.
pub fn write_output(dir: &Path, name: &str, contents: &[u8]) -> Result<OutputFile, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(OutputFile {
        path: name.to_string(),
        sha256: sha256_hex(contents),
        bytes: contents.len(),
    })
}
