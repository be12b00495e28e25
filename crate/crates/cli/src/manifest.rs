//! Run manifests and file helpers. Every output file is written through
//! [`Outputs`], so its hash lands in the manifest next to it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_text(path: &Path) -> CliResult<(String, String)> {
    let bytes = fs::read(path).map_err(|e| CliError::file(path, e))?;
    let hash = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| CliError::file(path, e))?;
    Ok((text, hash))
}

/// Parses a file with `parse`, mapping any failure to a file error.
pub fn read_parsed<T, E: std::fmt::Display>(
    path: &Path,
    inputs: &mut BTreeMap<String, String>,
    parse: impl FnOnce(&str) -> Result<T, E>,
) -> CliResult<T> {
    let (text, hash) = read_text(path)?;
    inputs.insert(path.display().to_string(), hash);
    parse(&text).map_err(|e| CliError::file(path, e))
}

#[derive(Default)]
pub struct Outputs {
    hashes: BTreeMap<String, String>,
    /// Files that embed wall-clock figures; their hashes go under `timing`.
    timed: BTreeMap<String, String>,
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::file(path, e))?;
    Ok(sha256_hex(bytes))
}

impl Outputs {
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        let hash = write_file(path, bytes)?;
        self.hashes.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn write_timed(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        let hash = write_file(path, bytes)?;
        self.timed.insert(path.display().to_string(), hash);
        Ok(())
    }
}

pub struct Manifest {
    pub command: &'static str,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub results: Value,
    pub timing: Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &'static str, config: &impl Serialize) -> Manifest {
        Manifest {
            command,
            config: serde_json::to_value(config).expect("config serialises"),
            inputs: BTreeMap::new(),
            results: Value::Null,
            timing: Map::new(),
        }
    }

    pub fn time_ms(&mut self, key: &str, ms: f64) {
        self.timing.insert(key.to_string(), json!(ms));
    }

    /// Writes `<primary>.manifest.json`.
    pub fn finish(mut self, primary: &Path, outputs: Outputs, threads: usize) -> CliResult<PathBuf> {
        if !outputs.timed.is_empty() {
            self.timing.insert("outputs".into(), json!(outputs.timed));
        }
        let value = json!({
            "command": self.command,
            "versions": {
                "latticeprop": latticeprop::VERSION,
                "cli": env!("CARGO_PKG_VERSION"),
            },
            "config": self.config,
            "inputs": self.inputs,
            "outputs": outputs.hashes,
            "results": self.results,
            "runtime": { "threads": threads },
            "timing": self.timing,
        });
        let mut path = primary.as_os_str().to_owned();
        path.push(".manifest.json");
        let path = PathBuf::from(path);
        let text = serde_json::to_string_pretty(&value).expect("manifest serialises") + "\n";
        fs::write(&path, text).map_err(|e| CliError::file(&path, e))?;
        Ok(path)
    }
}
