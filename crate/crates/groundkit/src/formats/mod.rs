//! Line-delimited JSON record formats.

pub mod annotations;
pub mod bench;
pub mod dialogues;
pub mod forecast;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A record that could not be parsed, reported in an error sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub error: String,
}

/// Records read from a line-delimited file. Blank lines are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed { records: Vec::new(), errors: Vec::new() }
    }
}

impl<T> Parsed<T> {
    /// Fails on the first bad line; for inputs that must be clean.
    pub fn strict(self, path: &Path) -> anyhow::Result<Vec<T>> {
        if let Some(e) = self.errors.first() {
            anyhow::bail!("{}:{}: {}", path.display(), e.line, e.error);
        }
        Ok(self.records)
    }
}

/// Parses each non-blank line with `parse`.
pub fn read_lines_with<T, F>(reader: impl BufRead, mut parse: F) -> io::Result<Parsed<T>>
where
    F: FnMut(&str) -> Result<T, String>,
{
    let mut out = Parsed::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse(&line) {
            Ok(r) => out.records.push(r),
            Err(error) => out.errors.push(LineError { line: i + 1, error }),
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Parsed<T>> {
    let file = File::open(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(read_lines_with(BufReader::new(file), |l| serde_json::from_str(l).map_err(|e| e.to_string()))?)
}

/// Writes one compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
