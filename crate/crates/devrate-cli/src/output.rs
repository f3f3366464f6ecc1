//! Artifact emission: atomic writes, self-describing headers, CSV assembly.
//!
//! Artifacts are written to a temporary file in the output directory and
//! renamed into place, so a failing run never leaves a partial file under the
//! final name. Every artifact embeds the full resolved config (and the seed,
//! when the run uses one): CSV files carry it in `#`-prefixed header lines
//! before the column row, JSON files as a `config` field. Nothing
//! time-dependent is written, so rerunning a command reproduces every
//! artifact byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use devrate::{Error, Result};
use serde::Serialize;

/// Output directory handle; creating it up front keeps the write path short.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn new(dir: &Path) -> Result<OutDir> {
        fs::create_dir_all(dir).map_err(|e| {
            Error::Config(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
        })
    }

    /// Writes `bytes` to `name` atomically (temp file + rename).
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.tmp"));
        let io = |e: std::io::Error| Error::Input(format!("cannot write {}: {e}", path.display()));
        fs::write(&tmp, bytes).map_err(io)?;
        fs::rename(&tmp, &path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            io(e)
        })?;
        Ok(path)
    }
}

/// Serializes a config to the single JSON line embedded in artifact headers.
pub fn config_line<T: Serialize>(config: &T) -> Result<String> {
    serde_json::to_string(config)
        .map_err(|e| Error::Config(format!("cannot serialize resolved config: {e}")))
}

/// Pretty-printed JSON artifact body.
pub fn json_body<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// CSV artifact under construction: `#` metadata lines, a column header,
/// then data rows. Values are numbers or bare words, so no field ever needs
/// RFC 4180 quoting.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(command: &str, config_json: &str, seed: Option<u64>, columns: &[String]) -> Csv {
        let mut text = format!("# devrate {command}\n# config: {config_json}\n");
        if let Some(seed) = seed {
            text.push_str(&format!("# seed: {seed}\n"));
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Shortest round-trip decimal rendering ('.' separator, `inf` for infinity).
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Optional value rendered as an empty field when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}
