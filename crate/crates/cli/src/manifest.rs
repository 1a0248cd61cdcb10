use std::path::{Path, PathBuf};

use serde::Serialize;

/// Provenance attached to every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub spec: String,
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, spec: &str, overrides: Vec<String>, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            spec: spec.to_string(),
            overrides,
            out_dir: out_dir.to_path_buf(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// `key: value` lines. CSV headers leave out the timestamp so that
    /// repeated runs produce identical files.
    pub fn lines(&self, with_timestamp: bool) -> Vec<String> {
        let mut out = vec![
            format!("ising-bell {}", self.version),
            format!("command: {}", self.command),
            format!("spec: {}", self.spec),
            format!("overrides: {}", if self.overrides.is_empty() { "none".into() } else { self.overrides.join(" ") }),
            format!("out: {}", self.out_dir.display()),
        ];
        if let Some(seed) = self.seed {
            out.push(format!("seed: {seed}"));
        }
        if with_timestamp {
            out.push(format!("timestamp: {}", self.timestamp));
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }
}
