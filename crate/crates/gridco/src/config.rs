//! Run configuration: TOML files plus `key.path=value` command line
//! overrides, checked against the schema before a run starts.

use crate::grid_model::DesignMode;
use crate::maddpg::MaddpgConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    CoOptContinuous,
    CoOptDiscrete,
    TwoStage,
    ClearOnly,
}

impl RunMode {
    pub fn design_mode(self) -> DesignMode {
        match self {
            RunMode::CoOptDiscrete => DesignMode::Discrete,
            _ => DesignMode::Continuous,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    /// Step size for the design parameter update, MW per update in
    /// continuous mode.
    pub lr: f64,
    /// Multiplicative decay applied to `lr` after each update.
    pub lr_decay: f64,
    /// Exploration spread of the continuous design distribution, MW.
    pub sigma: f64,
    /// Episodes accumulated per design update.
    pub n_up: usize,
    pub baseline_decay: f64,
    pub normalize_advantages: bool,
    /// Capacity step for discrete designs, MW.
    pub fixed_increment: f64,
    /// Initial mean per candidate line (continuous: MW, discrete:
    /// probability).
    pub initial_mu: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            lr: 1.0,
            lr_decay: 1.0,
            sigma: 5.0,
            n_up: 10,
            baseline_decay: 0.95,
            normalize_advantages: true,
            fixed_increment: 50.0,
            initial_mu: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub seed: u64,
    pub episodes: usize,
    /// Case file; the command line flag takes precedence when both are set.
    pub case: Option<String>,
    /// Output directory; the command line flag takes precedence.
    pub out: Option<String>,
    /// Value of lost load used when clearing with shedding enabled, $/MWh.
    pub shed_penalty: f64,
    /// Annualization weight; defaults to 8760 / T when unset.
    pub w_anu: Option<f64>,
    /// Exogenous bid per strategic generator, $/MWh; required by the
    /// two-stage mode, ignored elsewhere.
    pub scenario_bids: Option<Vec<f64>>,
    pub checkpoint_every: usize,
    pub maddpg: MaddpgConfig,
    pub design: DesignConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: RunMode::CoOptContinuous,
            seed: 0,
            episodes: 1000,
            case: None,
            out: None,
            shed_penalty: 1e4,
            w_anu: None,
            scenario_bids: None,
            checkpoint_every: 500,
            maddpg: MaddpgConfig::default(),
            design: DesignConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn effective_w_anu(&self, horizon: usize) -> f64 {
        self.w_anu.unwrap_or(8760.0 / horizon as f64)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("override {0:?} is not of the form key.path=value")]
    BadOverride(String),
    #[error("override key {0:?} does not exist in the schema")]
    UnknownKey(String),
    #[error("override {key}: expected a {expected} value, got {got:?}")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        got: String,
    },
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut doc: toml::Value =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let schema = toml::Value::try_from(schema_probe()).expect("schema serializes");
    for ov in overrides {
        apply_override(&mut doc, &schema, ov)?;
    }
    doc.try_into().map_err(|e| ConfigError::Parse(e.to_string()))
}

/// A fully populated config so every optional field appears in the override
/// schema with its concrete type.
fn schema_probe() -> RunConfig {
    RunConfig {
        case: Some(String::new()),
        out: Some(String::new()),
        w_anu: Some(0.0),
        scenario_bids: Some(Vec::new()),
        ..RunConfig::default()
    }
}

fn lookup<'a>(root: &'a toml::Value, parts: &[&str]) -> Option<&'a toml::Value> {
    let mut cur = root;
    for p in parts {
        cur = cur.as_table()?.get(*p)?;
    }
    Some(cur)
}

/// Sets `key.path = value` in the document, checking the key exists in the
/// schema and that the value parses to the schema's type at that path.
fn apply_override(
    doc: &mut toml::Value,
    defaults: &toml::Value,
    ov: &str,
) -> Result<(), ConfigError> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(ov.to_string()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || raw.is_empty() {
        return Err(ConfigError::BadOverride(ov.to_string()));
    }
    let parts: Vec<&str> = key.split('.').collect();

    let schema_entry = lookup(defaults, &parts)
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;

    // parse the value text through a one-line TOML document
    let parsed: toml::Value = toml::from_str::<toml::Value>(&format!("v = {raw}"))
        .ok()
        .and_then(|t| t.as_table().and_then(|m| m.get("v").cloned()))
        .or_else(|| {
            // bare strings may omit quotes, e.g. mode=two-stage
            toml::from_str::<toml::Value>(&format!("v = {raw:?}"))
                .ok()
                .and_then(|t| t.as_table().and_then(|m| m.get("v").cloned()))
        })
        .ok_or_else(|| ConfigError::BadOverride(ov.to_string()))?;

    let parsed = coerce(parsed, schema_entry).ok_or_else(|| ConfigError::TypeMismatch {
        key: key.to_string(),
        expected: schema_entry.type_str(),
        got: raw.to_string(),
    })?;

    let mut cur = doc;
    for p in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    cur.as_table_mut()
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Matches a parsed value against the schema type, allowing int -> float
/// widening. Returns None on a mismatch.
fn coerce(v: toml::Value, schema: &toml::Value) -> Option<toml::Value> {
    use toml::Value::*;
    match (v, schema) {
        (Integer(i), Float(_)) => Some(Float(i as f64)),
        (v, s) if v.type_str() == s.type_str() => Some(v),
        _ => None,
    }
}
