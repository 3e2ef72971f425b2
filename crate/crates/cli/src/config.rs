//! The JSON run configuration shared by every subcommand, and `--set` overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use hawkes_lab::mc::{HistogramSpec, Statistic, TestFunction};
use hawkes_lab::HawkesModel;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to the reference bivariate model (β = 4, or β = 6 for `sweep`).
    #[serde(default)]
    pub model: Option<HawkesModel>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub clt: ExperimentSection,
    #[serde(default = "ExperimentSection::sweep_default")]
    pub sweep: ExperimentSection,
    #[serde(default)]
    pub tilde: TildeSection,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub horizon: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { horizon: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub statistic: Statistic,
    #[serde(alias = "T_list")]
    pub horizons: Vec<f64>,
    pub n_paths: usize,
    pub test_function: Option<TestFunction>,
    pub histogram: Option<HistogramSpec>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            statistic: Statistic::Yprime,
            horizons: vec![1000.0],
            n_paths: 40_000,
            test_function: Some(TestFunction::default()),
            histogram: Some(HistogramSpec {
                bins_x: 40,
                bins_y: 40,
                range: [[-25.0, 25.0], [-25.0, 25.0]],
            }),
        }
    }
}

impl ExperimentSection {
    fn sweep_default() -> Self {
        Self {
            statistic: Statistic::Yprime,
            horizons: vec![10.0, 50.0, 100.0, 500.0, 1000.0],
            n_paths: 20_000,
            test_function: Some(TestFunction::default()),
            histogram: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TildeSection {
    /// One-based component of the inserted event.
    pub component: usize,
    pub start: f64,
    pub mark: f64,
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub n_runs: usize,
}

impl Default for TildeSection {
    fn default() -> Self {
        Self {
            component: 1,
            start: 0.0,
            mark: 1.0,
            horizon: 20.0,
            grid: vec![0.5, 1.0, 2.0],
            n_runs: 50_000,
        }
    }
}

/// A parsed configuration together with the overrides applied to it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub overrides: Vec<String>,
}

impl LoadedConfig {
    /// The model for a subcommand, plus a provenance note when a default was used.
    pub fn model(&self, default_beta: f64) -> anyhow::Result<(HawkesModel, Option<String>)> {
        match &self.config.model {
            Some(m) => Ok((m.clone(), None)),
            None => Ok((
                HawkesModel::reference_bivariate(default_beta)?,
                Some(format!(
                    "model not given: reference bivariate model (mu=(2,3), alpha=[[1,2],[2,1]], Exp(1) marks) with beta={default_beta}"
                )),
            )),
        }
    }

    pub fn override_notes(&self) -> Vec<String> {
        self.overrides
            .iter()
            .map(|o| format!("override {o}"))
            .collect()
    }
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<LoadedConfig> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Value::Object(Map::new()),
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config = serde_json::from_value(value).context("invalid configuration")?;
    Ok(LoadedConfig {
        config,
        overrides: overrides.to_vec(),
    })
}

/// Applies one `key=value` override to a raw configuration.
///
/// Keys are dotted paths (`clt.n_paths`); a bare key that is not a top-level
/// section but is a model field resolves under `model` (`beta=6`). The value
/// is parsed as JSON, falling back to a plain string. A scalar assigned to an
/// existing array replaces every element.
pub fn apply_override(root: &mut Value, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override {spec:?} has an empty key");
    }
    let new: Value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    const SECTIONS: [&str; 6] = ["model", "seed", "simulate", "clt", "sweep", "tilde"];
    const MODEL_KEYS: [&str; 5] = ["d", "mu", "alpha", "beta", "marks"];
    if parts.len() == 1 && !SECTIONS.contains(&parts[0]) {
        if MODEL_KEYS.contains(&parts[0]) {
            parts.insert(0, "model");
        } else {
            bail!("unknown override key {key:?}");
        }
    }
    if parts[0] == "model" && root.get("model").is_none_or(Value::is_null) {
        let reference = serde_json::to_value(HawkesModel::reference_bivariate(4.0)?)?;
        root.as_object_mut()
            .ok_or_else(|| anyhow!("config root must be an object"))?
            .insert("model".into(), reference);
    }
    let mut cursor = root;
    for part in &parts[..parts.len() - 1] {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| anyhow!("cannot descend into {key:?}"))?;
        cursor = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let last = parts[parts.len() - 1];
    let obj = cursor
        .as_object_mut()
        .ok_or_else(|| anyhow!("cannot set {key:?}"))?;
    match obj.get_mut(last) {
        Some(Value::Array(items)) if !new.is_array() && !new.is_object() => {
            broadcast(items, &new);
        }
        _ => {
            obj.insert(last.to_string(), new);
        }
    }
    Ok(())
}

fn broadcast(items: &mut [Value], scalar: &Value) {
    for item in items {
        match item {
            Value::Array(inner) => broadcast(inner, scalar),
            other => *other = scalar.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bare_model_key_broadcasts() {
        let mut v = json!({});
        apply_override(&mut v, "beta=6").unwrap();
        assert_eq!(v["model"]["beta"], json!([6, 6]));
        assert_eq!(v["model"]["mu"], json!([2.0, 3.0]));
    }

    #[test]
    fn dotted_paths_create_sections() {
        let mut v = json!({"clt": {"n_paths": 10}});
        apply_override(&mut v, "clt.n_paths=200").unwrap();
        apply_override(&mut v, "tilde.grid=[0.5,1]").unwrap();
        apply_override(&mut v, "clt.statistic=f").unwrap();
        assert_eq!(
            v,
            json!({"clt": {"n_paths": 200, "statistic": "f"}, "tilde": {"grid": [0.5, 1]}})
        );
    }

    #[test]
    fn malformed_overrides_fail() {
        let mut v = json!({});
        assert!(apply_override(&mut v, "beta").is_err());
        assert!(apply_override(&mut v, "=3").is_err());
        assert!(apply_override(&mut v, "nonsense=3").is_err());
    }

    #[test]
    fn empty_config_uses_defaults() {
        let c = load(None, &[]).unwrap();
        assert_eq!(c.config.seed, DEFAULT_SEED);
        assert_eq!(c.config.sweep.horizons.len(), 5);
        let (m, note) = c.model(6.0).unwrap();
        assert_eq!(m.beta(), &[6.0, 6.0]);
        assert!(note.is_some());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(load(None, &["clt.bogus=1".into()]).is_err());
    }
}
