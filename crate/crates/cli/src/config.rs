//! Layered run configuration: built-in defaults, then an optional JSON
//! config file, then command-line flags. Later layers win per field.

use psfr_core::metrics::ObjectiveConfig;
use psfr_core::selector::SelectorParams;
use psfr_core::signals::SignalConfig;
use serde::Deserialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Optional per-field overrides for the evaluation objective.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveOverrides {
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub t_max: Option<f64>,
    pub budget_k: Option<usize>,
}

/// Optional per-field overrides for the evolutionary search.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOverrides {
    pub islands: Option<usize>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub sigma: Option<f64>,
    pub flip_prob: Option<f64>,
    pub migration_interval: Option<usize>,
    pub archive_size: Option<usize>,
}

/// Shape of the --config file. Every section is optional; `signal` and
/// `selector_params` may be partial objects, merged key-wise over the
/// defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub signal: Option<Value>,
    pub selector_params: Option<Value>,
    #[serde(default)]
    pub objective: ObjectiveOverrides,
    #[serde(default)]
    pub evolve: EvolveOverrides,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::usage(format!("invalid config {}: {e}", path.display()))
            })
        }
    }
}

/// Key-wise overlay of JSON objects; non-objects replace wholesale.
fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base_map), Value::Object(patch_map)) => {
            for (k, v) in patch_map {
                merge_json(base_map.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Builds a typed config from defaults and up to two JSON patch layers.
fn layered<T: serde::Serialize + serde::de::DeserializeOwned>(
    defaults: &T,
    layers: &[Option<&Value>],
    what: &str,
) -> Result<T, CliError> {
    let mut doc = serde_json::to_value(defaults).expect("defaults serialize");
    for layer in layers.iter().flatten() {
        merge_json(&mut doc, (*layer).clone());
    }
    serde_json::from_value(doc).map_err(|e| CliError::usage(format!("invalid {what}: {e}")))
}

/// Selector parameters: defaults, config-file section, then --params file.
pub fn resolve_selector_params(
    file: &FileConfig,
    params_path: Option<&PathBuf>,
) -> Result<SelectorParams, CliError> {
    let from_flag: Option<Value> = match params_path {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read params {}: {e}", path.display()))
            })?;
            Some(serde_json::from_str(&text).map_err(|e| {
                CliError::usage(format!("invalid params {}: {e}", path.display()))
            })?)
        }
    };
    let params: SelectorParams = layered(
        &SelectorParams::default(),
        &[file.selector_params.as_ref(), from_flag.as_ref()],
        "selector params",
    )?;
    params
        .validate()
        .map_err(|e| CliError::usage(format!("selector params: {e}")))?;
    Ok(params)
}

/// Signal extraction config: defaults overlaid by the config-file section.
pub fn resolve_signal_config(file: &FileConfig) -> Result<SignalConfig, CliError> {
    let cfg: SignalConfig = layered(
        &SignalConfig::default(),
        &[file.signal.as_ref()],
        "signal config",
    )?;
    cfg.validate()
        .map_err(|e| CliError::usage(format!("signal config: {e}")))?;
    Ok(cfg)
}

/// Objective: defaults, config file, then individual flags.
pub fn resolve_objective(
    file: &FileConfig,
    alpha: Option<f64>,
    gamma: Option<f64>,
    t_max: Option<f64>,
    budget_k: Option<usize>,
) -> Result<ObjectiveConfig, CliError> {
    let mut cfg = ObjectiveConfig::default();
    let o = &file.objective;
    for (slot, layer) in [
        (&mut cfg.alpha, [o.alpha, alpha]),
        (&mut cfg.gamma, [o.gamma, gamma]),
        (&mut cfg.t_max, [o.t_max, t_max]),
    ] {
        for v in layer.into_iter().flatten() {
            *slot = v;
        }
    }
    for v in [o.budget_k, budget_k].into_iter().flatten() {
        cfg.budget_k = v;
    }
    cfg.validate()
        .map_err(|e| CliError::usage(format!("objective: {e}")))?;
    Ok(cfg)
}
