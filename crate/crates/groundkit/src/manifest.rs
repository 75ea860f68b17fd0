//! `run_manifest.json`: one per output directory, with an entry per
//! subcommand that wrote there.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input path to sha256 of its contents.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub created_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub runs: BTreeMap<String, RunManifest>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.input_digests.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Merges this run into the manifest of `dir` under `subcommand`,
    /// replacing any earlier entry for it.
    pub fn write(self, dir: &Path, subcommand: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_NAME);
        let mut file: ManifestFile = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
            Err(_) => ManifestFile::default(),
        };
        file.runs.insert(subcommand.into(), self);
        crate::formats::write_json(&path, &file)?;
        Ok(path)
    }
}

/// Directory that holds `path`, `.` for bare file names.
pub fn dir_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
