//! Output staging: every data file is rendered in memory first, then all
//! are written through temporary files and renamed into place, so a failed
//! run leaves no partial data behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Rounds to 9 significant digits so emitted numbers do not depend on
/// last-bit noise in formatting.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn num(x: f64) -> String {
    format!("{}", round9(x))
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                if let Some(r) = n.as_f64().map(round9).and_then(serde_json::Number::from_f64) {
                    *n = r;
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::Runtime(format!("serialize: {e}")))?;
    round_json(&mut v);
    let mut out = serde_json::to_vec_pretty(&v).map_err(|e| CliError::Runtime(format!("serialize: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(runtime)?;
    for r in rows {
        w.write_record(&r).map_err(runtime)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Files rendered by a command, written together by [`Staged::commit`].
#[derive(Default)]
pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, name: impl Into<String>, data: Vec<u8>) {
        self.files.push((name.into(), data));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("create {}: {e}", dir.display())))?;
        let mut temps = Vec::with_capacity(self.files.len());
        for (name, data) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(runtime)?;
            tmp.write_all(data).map_err(runtime)?;
            tmp.as_file().sync_all().map_err(runtime)?;
            temps.push((tmp, dir.join(name)));
        }
        let mut written = Vec::with_capacity(temps.len());
        for (tmp, path) in temps {
            tmp.persist(&path).map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

/// SHA-256 of the resolved config in canonical JSON.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String, CliError> {
    let bytes = json(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round9(0.123456789123), 0.123456789);
        assert_eq!(num(0.05), "0.05");
        assert_eq!(num(4.63e6), "4630000");
        assert_eq!(round9(0.0), 0.0);
    }

    #[test]
    fn commit_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Staged::default();
        s.add("a.csv", b"x\n1\n".to_vec());
        s.add("b.json", b"{}".to_vec());
        let paths = s.commit(dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), b"x\n1\n");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 2);
    }
}
