use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{MetricsReport, TrainConfig};

/// Summary of one CLI run, written as JSON at the end of the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub input: Option<String>,
    /// Config as `key -> value` strings.
    pub config: BTreeMap<String, String>,
    pub config_hash: Option<String>,
    /// Role (`mesh`, `checkpoint`, ...) to path.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub metrics: Option<MetricsReport>,
    /// Seconds since the Unix epoch when the manifest was written.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            ..Self::default()
        }
    }

    pub fn set_config(&mut self, config: &TrainConfig) {
        self.config = TrainConfig::KEYS
            .iter()
            .map(|k| (k.to_string(), config.get(k).expect("known key")))
            .collect();
        self.config_hash = Some(crate::pipeline::hex(&config.hash()));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Stamps the creation time and writes the manifest atomically.
    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
