use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::cli::{Common, DEFAULT_OUT, OUT_ENV};
use crate::error::{LanError, Result};
use crate::io::{read_file, write_atomic};

/// Record written next to a command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    /// Fully resolved settings.
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_ms: u64,
    pub finished_unix: u64,
}

/// SHA-256 of the canonical JSON text (object keys sorted, no whitespace).
pub fn config_hash(config: &Value) -> String {
    let mut text = String::new();
    canonical(config, &mut text);
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Layers the `--config` file, the flags and `--seed` into one `T`.
pub(crate) fn merge_settings<T: Serialize + DeserializeOwned>(flags: &T, common: &Common) -> Result<T> {
    let mut merged = match &common.config {
        Some(path) => {
            let bytes = read_file(path)?;
            match serde_json::from_slice::<Value>(&bytes) {
                Ok(Value::Object(map)) => map,
                Ok(_) => {
                    return Err(LanError::Config(format!(
                        "{} must hold a JSON object",
                        path.display()
                    )))
                }
                Err(e) => return Err(LanError::Config(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    if let Value::Object(set) = serde_json::to_value(flags).expect("flags serialise") {
        merged.extend(set);
    }
    if let Some(seed) = common.seed {
        merged.insert("seed".into(), seed.into());
    }
    let origin = common
        .config
        .as_ref()
        .map_or("flags".to_string(), |p| p.display().to_string());
    serde_json::from_value(Value::Object(merged)).map_err(|e| LanError::Config(format!("{origin}: {e}")))
}

pub(crate) fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| LanError::Config(format!("missing required setting --{flag}")))
}

/// Tracks one command's inputs, outputs and timing.
pub(crate) struct Session {
    command: String,
    out: PathBuf,
    started: Instant,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Session {
    pub fn new(command: &str, common: &Common) -> Self {
        let out = common
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Session {
            command: command.into(),
            out,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Atomically writes `name` inside the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(name);
        self.write_at(&path, bytes)?;
        Ok(path)
    }

    pub fn write_at(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serialises");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<command>.run.json` last, so its presence marks a finished run.
    pub fn finish(self, config: &impl Serialize, seed: u64) -> Result<()> {
        let config = serde_json::to_value(config).expect("config serialises");
        let hash = config_hash(&config);
        let manifest = RunManifest {
            run_id: format!("{}-{}", self.command, &hash[..12]),
            command: self.command.clone(),
            config_hash: hash,
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            duration_ms: self.started.elapsed().as_millis() as u64,
            finished_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
        bytes.push(b'\n');
        write_atomic(&self.out.join(format!("{}.run.json", self.command)), &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"y": [1, 2], "x": "s"}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": {"x": "s", "y": [1, 2]}, "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: Value = serde_json::from_str(r#"{"a": {"x": "s", "y": [2, 1]}, "b": 1}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn flags_override_the_file() {
        #[derive(Serialize, Deserialize, Debug, PartialEq)]
        #[serde(deny_unknown_fields)]
        struct S {
            #[serde(default, skip_serializing_if = "Option::is_none")]
            a: Option<u32>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            b: Option<u32>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            seed: Option<u64>,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"a": 1, "b": 2, "seed": 4}"#).unwrap();
        let common = Common {
            config: Some(path.clone()),
            seed: Some(9),
            ..Common::default()
        };
        let got = merge_settings(&S { a: None, b: Some(5), seed: None }, &common).unwrap();
        assert_eq!(got, S { a: Some(1), b: Some(5), seed: Some(9) });

        std::fs::write(&path, r#"{"nope": 1}"#).unwrap();
        let err = merge_settings(&S { a: None, b: None, seed: None }, &common).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
