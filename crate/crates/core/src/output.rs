//! CSV and manifest emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Command, Gamma0Resolution, RunConfig};
use crate::error::Result;

pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Everything needed to reproduce a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_sha256: String,
    pub seed: u64,
    pub gamma0: Gamma0Resolution,
    pub rows: usize,
    pub csv_sha256: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(
        cfg: &RunConfig,
        command: Command,
        gamma0: Gamma0Resolution,
        csv: &str,
        rows: usize,
    ) -> Self {
        use sha2::{Digest, Sha256};
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            gamma0,
            rows,
            csv_sha256: hex::encode(Sha256::digest(csv.as_bytes())),
            config: cfg.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// `results.csv` -> `results.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}
