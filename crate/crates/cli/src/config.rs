//! Parameter resolution: defaults, fixture values, config-file values, and
//! flags merge in that order (later wins), and the merged result is echoed
//! into every summary. Unknown keys are errors, not warnings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

/// Exit-code carrier: Config maps to 2, Experiment to 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Experiment(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn experiment(msg: impl Into<String>) -> Self {
        CliError::Experiment(msg.into())
    }
}

/// Consumable view of the merged parameter map. Every `take_*` records the
/// value actually used, so `finish` can hand back the full resolved config.
pub struct ParamBag {
    sub: &'static str,
    map: BTreeMap<String, Value>,
    resolved: BTreeMap<String, Value>,
}

impl ParamBag {
    pub fn new(sub: &'static str) -> Self {
        ParamBag { sub, map: BTreeMap::new(), resolved: BTreeMap::new() }
    }

    pub fn absorb(&mut self, layer: &BTreeMap<String, Value>) {
        for (k, v) in layer {
            self.map.insert(k.clone(), v.clone());
        }
    }

    fn bad_type(&self, key: &str, want: &str, got: &Value) -> CliError {
        CliError::config(format!("parameter `{key}` must be {want}, got {got}"))
    }

    pub fn take_u64(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        let v = match self.map.remove(key) {
            Some(v) => v.as_u64().ok_or_else(|| self.bad_type(key, "a nonnegative integer", &v))?,
            None => default,
        };
        self.resolved.insert(key.into(), Value::from(v));
        Ok(v)
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.take_u64(key, default as u64)? as usize)
    }

    pub fn take_opt_usize(&mut self, key: &str) -> Result<Option<usize>, CliError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => {
                let u =
                    v.as_u64().ok_or_else(|| self.bad_type(key, "a nonnegative integer", &v))?;
                self.resolved.insert(key.into(), Value::from(u));
                Ok(Some(u as usize))
            }
        }
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = match self.map.remove(key) {
            Some(v) => v.as_f64().ok_or_else(|| self.bad_type(key, "a number", &v))?,
            None => default,
        };
        self.resolved.insert(key.into(), Value::from(v));
        Ok(v)
    }

    pub fn take_choice(
        &mut self,
        key: &str,
        allowed: &[&str],
        default: &str,
    ) -> Result<String, CliError> {
        let v = match self.map.remove(key) {
            Some(v) => match v.as_str() {
                Some(s) => s.to_string(),
                None => return Err(self.bad_type(key, "a string", &v)),
            },
            None => default.to_string(),
        };
        if !allowed.contains(&v.as_str()) {
            return Err(CliError::config(format!(
                "parameter `{key}` must be one of {allowed:?}, got `{v}`"
            )));
        }
        self.resolved.insert(key.into(), Value::from(v.clone()));
        Ok(v)
    }

    pub fn take_opt_string(&mut self, key: &str) -> Result<Option<String>, CliError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                Some(s) => {
                    self.resolved.insert(key.into(), Value::from(s));
                    Ok(Some(s.to_string()))
                }
                None => Err(self.bad_type(key, "a string", &v)),
            },
        }
    }

    /// Overrides a resolved entry, for values derived rather than taken
    /// (e.g. n read off a truth-table file).
    pub fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.resolved.insert(key.into(), value.into());
    }

    /// Rejects leftovers and returns the resolved config with the seed folded
    /// in.
    pub fn finish(self, seed: u64) -> Result<BTreeMap<String, Value>, CliError> {
        if let Some(k) = self.map.keys().next() {
            return Err(CliError::config(format!(
                "unknown parameter `{k}` for subcommand `{}`",
                self.sub
            )));
        }
        let mut resolved = self.resolved;
        resolved.insert("seed".into(), Value::from(seed));
        Ok(resolved)
    }
}

#[derive(Default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
}

/// Reads a JSON config file. `seed` and `subcommand` are meta keys; the rest
/// is parameters. A `subcommand` naming a different experiment is an error.
pub fn load_config_file(path: &Path, sub: &str) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let Value::Object(obj) = value else {
        return Err(CliError::config(format!("config {} must be a JSON object", path.display())));
    };
    let mut cfg = FileConfig::default();
    for (k, v) in obj {
        match k.as_str() {
            "seed" => {
                cfg.seed = Some(v.as_u64().ok_or_else(|| {
                    CliError::config("config key `seed` must be a nonnegative integer")
                })?);
            }
            "subcommand" => {
                let named = v.as_str().unwrap_or_default().to_string();
                if named != sub {
                    return Err(CliError::config(format!(
                        "config file is for subcommand `{named}`, not `{sub}`"
                    )));
                }
            }
            _ => {
                cfg.params.insert(k, v);
            }
        }
    }
    Ok(cfg)
}

/// A committed acceptance fixture: the pinned seed, parameter overrides, and
/// per-metric rules evaluated against the summary.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub expect: BTreeMap<String, Value>,
}

pub fn load_fixture(sub: &str, override_path: Option<&Path>) -> Result<Fixture, CliError> {
    let path = match override_path {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{sub}.json")),
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::config(format!("fixture {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("fixture {}: {e}", path.display())))
}

/// The one supported environment override: a default seed. `--check` runs
/// ignore it so fixtures stay authoritative.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("PRGLAB_SEED") {
        Ok(s) => s.trim().parse::<u64>().map(Some).map_err(|_| {
            CliError::config(format!("PRGLAB_SEED must be a 64-bit unsigned integer, got `{s}`"))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::config(format!("PRGLAB_SEED: {e}"))),
    }
}
