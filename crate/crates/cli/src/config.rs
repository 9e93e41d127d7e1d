//! JSON experiment configs with dotted-path `key=value` overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};
use stf_core::schemes::Scheme;
use stf_core::sim::{PopularitySpec, SamplingMode};
use stf_core::state_space::DEFAULT_MAX_STATES;

pub const MAX_STATES_ENV: &str = "STF_CACHE_MAX_STATES";

/// Exact-regime state cap, from the environment when set.
pub fn max_states() -> Result<usize> {
    match std::env::var(MAX_STATES_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .with_context(|| format!("{MAX_STATES_ENV}={s:?} is not a positive integer")),
        Err(_) => Ok(DEFAULT_MAX_STATES),
    }
}

/// Reads the config document (an empty object when no path is given) and
/// applies the overrides in order.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Value> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Value::Object(Map::new()),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(doc)
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let Some((path, raw)) = assignment.split_once('=') else {
        bail!("override {assignment:?} is not of the form key=value");
    };
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override key {path:?} has an empty component");
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            bail!("override {path:?} descends into a non-object value");
        }
        node = node
            .as_object_mut()
            .expect("checked object")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        None => bail!("override {path:?} descends into a non-object value"),
    }
}

pub fn parse<T: DeserializeOwned>(doc: Value, command: &str) -> Result<T> {
    serde_json::from_value(doc).with_context(|| format!("invalid {command} config"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatesTable {
    #[default]
    Listing,
    Matrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesConfig {
    pub n_contents: usize,
    pub cache_size: usize,
    #[serde(default)]
    pub table: StatesTable,
}

/// State ordering used for output and analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Predicted-mass order for LP/TLP, canonical otherwise.
    #[default]
    Auto,
    Canonical,
    Predicted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PointsSpec {
    Grid { divisions: usize },
    Random { count: usize },
    Explicit { points: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub scheme: Scheme,
    pub popularity: PopularitySpec,
    pub cache_size: usize,
    pub points: PointsSpec,
    #[serde(default)]
    pub decompose: bool,
    #[serde(default)]
    pub order: Order,
    pub seed: Option<u64>,
}

fn default_tolerance() -> f64 {
    stf_core::steady::DEFAULT_TOLERANCE
}

fn default_max_iter() -> usize {
    stf_core::steady::DEFAULT_MAX_ITER
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    pub scheme: Scheme,
    pub popularity: PopularitySpec,
    pub cache_size: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub order: Order,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumExport {
    #[default]
    Spectrum,
    Matrix,
}

fn default_horizons() -> Vec<u32> {
    vec![1, 5, 10, 50]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub scheme: Scheme,
    pub popularity: PopularitySpec,
    pub cache_size: usize,
    #[serde(default)]
    pub export: SpectrumExport,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<u32>,
    #[serde(default)]
    pub order: Order,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SimTask {
    Trace {
        n_requests: u64,
        /// Initial recency order (1-based, most recent first); empty cache when absent.
        initial: Option<Vec<usize>>,
    },
    Stf {
        points: PointsSpec,
        m: u64,
        r: u64,
        #[serde(default)]
        mode: SamplingMode,
    },
    Theta {
        samples_per_state: u64,
        #[serde(default)]
        mode: SamplingMode,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scheme: Scheme,
    pub popularity: PopularitySpec,
    pub cache_size: usize,
    pub task: SimTask,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcpConfig {
    pub scheme: Scheme,
    pub popularity: PopularitySpec,
    pub cache_size: usize,
    pub n_rounds: u64,
    pub n_requests: usize,
    /// 1-based content labels.
    pub tracked_contents: Vec<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub popularity: PopularitySpec,
    pub cache_size: usize,
    #[serde(default)]
    pub recency: stf_core::schemes::RecencyModel,
}
