//! Stage artifacts on disk: atomic writes, the per-directory manifest that
//! drives caching, carrying upstream artifacts forward and the run log.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use intent_core::util::sha256_hex;

use crate::failure::{CliResult, Failure};

pub const MANIFEST: &str = "manifest.json";
pub const RUN_LOG: &str = "runs.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    /// Input label → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub config_hash: String,
    /// File name inside the stage directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub timestamp: String,
}

pub fn now() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

pub fn read_bytes(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::config(format!("cannot read {what} {}: {e}", path.display())))
}

pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::data(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| Failure::data(format!("cannot write {}: {e}", path.display()));
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_manifest(dir: &Path) -> Option<StageManifest> {
    let bytes = fs::read(dir.join(MANIFEST)).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// One run of one stage writing into `out`.
pub struct Stage {
    name: &'static str,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    config: BTreeMap<String, Value>,
    outputs: BTreeMap<String, String>,
    from_scratch: bool,
}

impl Stage {
    pub fn new(name: &'static str, out: &Path, from_scratch: bool) -> Self {
        Stage {
            name,
            out: out.to_path_buf(),
            inputs: BTreeMap::new(),
            config: BTreeMap::new(),
            outputs: BTreeMap::new(),
            from_scratch,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Reads an input file and records its hash.
    pub fn read(&mut self, path: &Path, what: &str) -> CliResult<Vec<u8>> {
        let bytes = read_bytes(path, what)?;
        self.inputs.insert(what.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path, what: &str) -> CliResult<T> {
        let bytes = self.read(path, what)?;
        parse_json(&bytes, path)
    }

    /// Records a setting that affects the outputs.
    pub fn setting(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.config.insert(key.to_string(), v);
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.config).unwrap_or_default())
    }

    /// True when the directory already holds this stage's outputs for the
    /// same inputs and settings, with every output file intact.
    pub fn is_fresh(&self) -> bool {
        if self.from_scratch {
            return false;
        }
        let Some(m) = read_manifest(&self.out) else {
            return false;
        };
        m.stage == self.name
            && m.inputs == self.inputs
            && m.config_hash == self.config_hash()
            && m.outputs
                .iter()
                .all(|(file, hash)| fs::read(self.out.join(file)).is_ok_and(|b| &sha256_hex(&b) == hash))
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.out.join(file), bytes)?;
        self.outputs.insert(file.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> CliResult<()> {
        let bytes = to_json_bytes(value)?;
        self.write(file, &bytes)
    }

    /// Copies the artifacts listed in the upstream manifest of `dir` so the
    /// next stage finds everything in one place.
    pub fn carry_from(&mut self, dir: &Path) -> CliResult<()> {
        if same_dir(dir, &self.out) {
            if let Some(m) = read_manifest(dir) {
                self.outputs.extend(m.outputs);
            }
            return Ok(());
        }
        let Some(m) = read_manifest(dir) else {
            return Ok(());
        };
        for file in m.outputs.keys() {
            let bytes = read_bytes(&dir.join(file), "upstream artifact")?;
            self.write(file, &bytes)?;
        }
        Ok(())
    }

    /// Writes the manifest and appends to the run log.
    pub fn finish(self, summary: Value) -> CliResult<()> {
        let manifest = StageManifest {
            stage: self.name.to_string(),
            config_hash: self.config_hash(),
            inputs: self.inputs,
            outputs: self.outputs,
            timestamp: now(),
        };
        write_atomic(&self.out.join(MANIFEST), &to_json_bytes(&manifest)?)?;
        append_run_log(&self.out, self.name, &manifest.config_hash, false, summary)
    }

    /// Logs a run that found its outputs up to date.
    pub fn finish_cached(self) -> CliResult<()> {
        let hash = self.config_hash();
        append_run_log(&self.out, self.name, &hash, true, Value::Null)
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn append_run_log(dir: &Path, stage: &str, config_hash: &str, cached: bool, summary: Value) -> CliResult<()> {
    let line = serde_json::json!({
        "time": now(),
        "stage": stage,
        "config_hash": config_hash,
        "cached": cached,
        "summary": summary,
    });
    let io = |e: std::io::Error| Failure::data(format!("cannot append to run log: {e}"));
    fs::create_dir_all(dir).map_err(io)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(RUN_LOG))
        .map_err(io)?;
    writeln!(file, "{line}").map_err(io)
}
