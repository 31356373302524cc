//! Experiment configuration: one strict JSON document plus `key.path=value`
//! overrides applied before deserialization.

use std::path::{Path, PathBuf};

use d2lab_core::agent::D2Config;
use d2lab_core::baselines::BcConfig;
use d2lab_core::disc::DiscConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    D2,
    Bc,
    NoDisc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::D2 => "d2",
            Method::Bc => "bc",
            Method::NoDisc => "no_disc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub env_id: String,
    pub demo_path: Option<PathBuf>,
    /// Use a seeded subset of this many trajectories; `None` uses all.
    pub n_trajectories: Option<usize>,
    pub seeds: Vec<u64>,
    /// Shorthands for `d2.total_steps` and `d2.eval_interval`.
    pub total_steps: Option<usize>,
    pub eval_interval: Option<usize>,
    pub output_dir: PathBuf,
    /// Trajectory counts for `sweep`.
    pub sweep_counts: Vec<usize>,
    pub d2: D2Config,
    pub disc: DiscConfig,
    pub bc: BcConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::D2,
            env_id: "pointmass".into(),
            demo_path: None,
            n_trajectories: None,
            seeds: vec![0, 1, 2, 3, 4],
            total_steps: None,
            eval_interval: None,
            output_dir: PathBuf::from("results"),
            sweep_counts: vec![5, 10, 15, 20],
            d2: D2Config::default(),
            disc: DiscConfig::default(),
            bc: BcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The trainer settings with the top-level shorthands folded in.
    pub fn resolved_d2(&self) -> D2Config {
        let mut d2 = self.d2.clone();
        if let Some(n) = self.total_steps {
            d2.total_steps = n;
        }
        if let Some(n) = self.eval_interval {
            d2.eval_interval = n;
        }
        d2
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        if self.n_trajectories == Some(0) {
            return Err(CliError::Config("n_trajectories must be positive".into()));
        }
        let wrap = |field: &str, e: d2lab_core::Error| CliError::Config(format!("{field}: {e}"));
        self.resolved_d2().validate().map_err(|e| wrap("d2", e))?;
        self.disc.validate().map_err(|e| wrap("disc", e))?;
        self.bc.validate().map_err(|e| wrap("bc", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse `text` strictly; unknown keys are reported by name.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    from_value(value)
}

pub fn from_value(value: Value) -> Result<ExperimentConfig, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

/// Read the config file (or start from `{}`), apply overrides in order,
/// then deserialize and validate.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    let cfg = from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Set `a.b.c=value` inside `root`, creating objects along the way. The
/// value is read as JSON when it parses, otherwise as a string.
pub fn apply_override(root: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item.split_once('=').ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key {path:?} is malformed")));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("{} is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("keys is non-empty")
}
