//! Provenance record attached to every output file.

use std::path::{Path, PathBuf};

use anyhow::Context;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub out: PathBuf,
}

impl Manifest {
    /// Header entries embedded in data files. The timestamp is left out so
    /// reruns produce identical bytes.
    pub fn entries(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), self.command.clone()),
            ("config".into(), self.config.clone()),
            ("seed".into(), self.seed.to_string()),
            ("out".into(), self.out.display().to_string()),
            ("version".into(), VERSION.to_string()),
        ]
    }

    /// Writes `manifest.txt`, the only file carrying a timestamp.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let mut text = String::new();
        for (k, v) in self.entries() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text.push_str(&format!("timestamp = {}\n", chrono::Utc::now().to_rfc3339()));
        let path = dir.join("manifest.txt");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
