//! Run configuration: one JSON document driving every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use croco::data::{self, Dataset, FeatureSchema};
use croco::generators::{GenerationConfig, Method, ValidityLoss};
use croco::nn::{self, MlpClassifier, TrainParams};
use croco::noise::NoiseSpec;
use croco::{Error, Result};

/// Parsed run configuration. Grids, sample counts, and optimizer settings
/// all have defaults; only the data and model sources are mandatory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub model: ModelSource,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_sigma2_grid")]
    pub sigma2_grid: Vec<f64>,
    #[serde(default = "default_target_grid")]
    pub target_grid: Vec<f64>,
    #[serde(default)]
    pub generation: GenerationSettings,
    /// Fresh-draw sample count used when scoring finished counterfactuals.
    #[serde(default = "default_k_eval")]
    pub k_eval: usize,
    #[serde(default = "default_instances_per_cell")]
    pub instances_per_cell: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

/// Exactly one of `csv` or `synthetic`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub csv: Option<CsvSource>,
    pub synthetic: Option<SyntheticSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSource {
    pub n: usize,
    pub separation: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        SyntheticSource { n: 400, separation: 4.0, seed: None }
    }
}

/// Exactly one of `weights` or `train`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    pub weights: Option<PathBuf>,
    pub train: Option<TrainSettings>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub hidden_dims: Vec<usize>,
    pub threshold: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub test_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let p = TrainParams::default();
        TrainSettings {
            hidden_dims: p.hidden_dims,
            threshold: p.threshold,
            learning_rate: p.learning_rate,
            epochs: p.epochs,
            batch_size: p.batch_size,
            seed: None,
            test_fraction: 0.25,
        }
    }
}

/// Optimizer settings shared by all generation paths. `sigma2` and `target`
/// are the single-point values used by `generate`; sweeps replace them with
/// grid cells.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSettings {
    pub sigma2: f64,
    pub target: f64,
    pub k: usize,
    pub m: f64,
    pub learning_rate: f64,
    pub lambda_init: f64,
    pub lambda_decrement: f64,
    pub max_inner_iters: usize,
    pub max_outer_steps: usize,
    pub validity_loss: ValidityLoss,
    pub record_trace: bool,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            sigma2: 0.01,
            target: 0.35,
            k: 500,
            m: 0.1,
            learning_rate: 0.001,
            lambda_init: 1.0,
            lambda_decrement: 0.25,
            max_inner_iters: 1000,
            max_outer_steps: 8,
            validity_loss: ValidityLoss::Squared,
            record_trace: false,
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Wachter, Method::Probe, Method::Croco]
}

fn default_sigma2_grid() -> Vec<f64> {
    vec![0.005, 0.01, 0.015, 0.02]
}

fn default_target_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35]
}

fn default_k_eval() -> usize {
    croco::bench::DEFAULT_K_EVAL
}

fn default_instances_per_cell() -> usize {
    100
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks that need no model: source exclusivity and numeric
    /// domains. Reachability of CROCO targets needs the threshold and runs
    /// separately per command.
    pub fn validate(&self) -> Result<()> {
        match (&self.data.csv, &self.data.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "data: both csv and synthetic given; keep exactly one".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "data: neither csv nor synthetic given; add exactly one".into(),
                ))
            }
            _ => {}
        }
        match (&self.model.weights, &self.model.train) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "model: both weights and train given; keep exactly one".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "model: neither weights nor train given; add exactly one".into(),
                ))
            }
            _ => {}
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods: list at least one method".into()));
        }
        for (name, grid) in [("sigma2_grid", &self.sigma2_grid), ("target_grid", &self.target_grid)] {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name}: must be non-empty")));
            }
            for v in grid {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::Config(format!("{name}: value {v} must be finite and positive")));
                }
            }
        }
        for t in &self.target_grid {
            if *t >= 1.0 {
                return Err(Error::Config(format!("target_grid: target {t} must lie in (0, 1)")));
            }
        }
        if self.k_eval == 0 {
            return Err(Error::Config("k_eval: must be at least 1".into()));
        }
        if self.instances_per_cell == 0 {
            return Err(Error::Config("instances_per_cell: must be at least 1".into()));
        }
        if let Some(train) = &self.model.train {
            if !(train.test_fraction >= 0.0 && train.test_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "model.train.test_fraction: {} must lie in [0, 1)",
                    train.test_fraction
                )));
            }
        }
        Ok(())
    }

    /// Rejects CROCO targets at or below the certified floor m/(1-t) before
    /// any generation or training starts. `targets` is whatever the calling
    /// command is about to use.
    pub fn check_croco_reachability(&self, threshold: f64, targets: &[f64]) -> Result<()> {
        if !self.methods.contains(&Method::Croco) {
            return Ok(());
        }
        let floor = self.generation.m / (1.0 - threshold);
        for &target in targets {
            if target <= floor {
                return Err(Error::Config(format!(
                    "target {target} is unreachable for croco: the certified ceiling cannot go \
                     below m/(1 - t) = {floor}; lower m or raise the target"
                )));
            }
        }
        Ok(())
    }

    /// Threshold the model will use, readable without training.
    pub fn model_threshold(&self) -> Result<f64> {
        match (&self.model.weights, &self.model.train) {
            (Some(path), None) => Ok(MlpClassifier::load_weights(path)?.threshold()),
            (None, Some(train)) => Ok(train.threshold),
            _ => unreachable!("validated: exactly one model source"),
        }
    }

    /// Loads and normalizes the configured dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let raw = match (&self.data.csv, &self.data.synthetic) {
            (Some(csv), None) => {
                let schema = FeatureSchema::from_json_file(&csv.schema)?;
                data::load_csv(&csv.path, &schema)?
            }
            (None, Some(synth)) => {
                data::synth_two_gaussians(synth.n, synth.separation, synth.seed.unwrap_or(self.seed))?
            }
            _ => unreachable!("validated: exactly one data source"),
        };
        raw.normalize()
    }

    /// Produces the model: loads weights or trains on the given normalized
    /// dataset. Returns fit diagnostics only when training happened.
    pub fn load_model(&self, dataset: &Dataset) -> Result<(MlpClassifier, Option<nn::TrainOutcome>)> {
        match (&self.model.weights, &self.model.train) {
            (Some(path), None) => Ok((MlpClassifier::load_weights(path)?, None)),
            (None, Some(settings)) => {
                let outcome = self.train_model(dataset, settings)?;
                Ok((outcome.model.clone(), Some(outcome)))
            }
            _ => unreachable!("validated: exactly one model source"),
        }
    }

    fn train_model(&self, dataset: &Dataset, settings: &TrainSettings) -> Result<nn::TrainOutcome> {
        let params = TrainParams {
            hidden_dims: settings.hidden_dims.clone(),
            threshold: settings.threshold,
            learning_rate: settings.learning_rate,
            epochs: settings.epochs,
            batch_size: settings.batch_size,
            seed: settings.seed.unwrap_or(self.seed),
        };
        if settings.test_fraction == 0.0 {
            return nn::train(dataset, None, &params);
        }
        let (train_set, test_set) = dataset.split(1.0 - settings.test_fraction, params.seed)?;
        let test = if test_set.is_empty() { None } else { Some(&test_set) };
        nn::train(&train_set, test, &params)
    }

    /// Base generation config at the single-point noise scale; sweeps
    /// override the noise and target per grid cell.
    pub fn base_generation_config(&self, dataset: &Dataset, seed: u64) -> Result<GenerationConfig> {
        let g = &self.generation;
        let noise = NoiseSpec::gaussian(g.sigma2, dataset.n_cols())?
            .with_frozen(dataset.frozen_mask())?
            .with_seed(seed);
        let mut cfg = GenerationConfig::new(Method::Croco, noise);
        cfg.target = g.target;
        cfg.k = g.k;
        cfg.m = g.m;
        cfg.learning_rate = g.learning_rate;
        cfg.lambda_init = g.lambda_init;
        cfg.lambda_decrement = g.lambda_decrement;
        cfg.max_inner_iters = g.max_inner_iters;
        cfg.max_outer_steps = g.max_outer_steps;
        cfg.validity_loss = g.validity_loss;
        cfg.record_trace = g.record_trace;
        Ok(cfg)
    }
}

/// Parses an instance selector like `0,3,7-9` into sorted unique indices.
pub fn parse_selector(selector: &str, n_rows: usize) -> Result<Vec<usize>> {
    let mut indices = Vec::new();
    for part in selector.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (parse_index(a)?, parse_index(b)?),
            None => {
                let i = parse_index(part)?;
                (i, i)
            }
        };
        if lo > hi {
            return Err(Error::Config(format!("instance range {part} is reversed")));
        }
        for i in lo..=hi {
            if i >= n_rows {
                return Err(Error::Config(format!(
                    "instance {i} out of range; the dataset has {n_rows} rows"
                )));
            }
            indices.push(i);
        }
    }
    indices.sort_unstable();
    indices.dedup();
    if indices.is_empty() {
        return Err(Error::Config("instance selector matched nothing".into()));
    }
    Ok(indices)
}

fn parse_index(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("instance index '{s}' is not a non-negative integer")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{ "data": { "synthetic": { "n": 40 } }, "model": { "train": {} } }"#.to_string()
    }

    fn parse(json: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(&minimal_json()).unwrap();
        assert_eq!(cfg.methods, vec![Method::Wachter, Method::Probe, Method::Croco]);
        assert_eq!(cfg.sigma2_grid, vec![0.005, 0.01, 0.015, 0.02]);
        assert_eq!(cfg.target_grid.len(), 7);
        assert_eq!(cfg.generation.k, 500);
        assert_eq!(cfg.generation.m, 0.1);
        assert_eq!(cfg.generation.learning_rate, 0.001);
        assert_eq!(cfg.generation.lambda_init, 1.0);
        assert_eq!(cfg.generation.lambda_decrement, 0.25);
        assert_eq!(cfg.k_eval, 10_000);
        assert_eq!(cfg.instances_per_cell, 100);
    }

    #[test]
    fn rejects_two_or_zero_sources() {
        let both_data = r#"{
            "data": { "synthetic": { "n": 40 }, "csv": { "path": "a.csv", "schema": "s.json" } },
            "model": { "train": {} }
        }"#;
        assert!(parse(both_data).is_err());
        let no_model = r#"{ "data": { "synthetic": {} }, "model": {} }"#;
        assert!(parse(no_model).is_err());
        let both_model = r#"{
            "data": { "synthetic": {} },
            "model": { "train": {}, "weights": "w.json" }
        }"#;
        assert!(parse(both_model).is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_domains() {
        assert!(parse(r#"{ "data": { "synthetic": {} }, "model": { "train": {} }, "typo": 1 }"#).is_err());
        assert!(parse(
            r#"{ "data": { "synthetic": {} }, "model": { "train": {} }, "sigma2_grid": [] }"#
        )
        .is_err());
        assert!(parse(
            r#"{ "data": { "synthetic": {} }, "model": { "train": {} }, "target_grid": [1.5] }"#
        )
        .is_err());
        assert!(parse(
            r#"{ "data": { "synthetic": {} }, "model": { "train": {} }, "k_eval": 0 }"#
        )
        .is_err());
    }

    #[test]
    fn croco_reachability_uses_floor() {
        let cfg = parse(&minimal_json()).unwrap();
        // m = 0.1, t = 0.5: floor 0.2.
        assert!(cfg.check_croco_reachability(0.5, &[0.35]).is_ok());
        let err = cfg.check_croco_reachability(0.5, &[0.35, 0.2]).unwrap_err();
        assert!(err.to_string().contains("unreachable"), "{err}");
        assert!(err.is_config());
    }

    #[test]
    fn reachability_skipped_without_croco() {
        let json = r#"{
            "data": { "synthetic": {} }, "model": { "train": {} },
            "methods": ["wachter"]
        }"#;
        let cfg = parse(json).unwrap();
        assert!(cfg.check_croco_reachability(0.5, &[0.05]).is_ok());
    }

    #[test]
    fn selector_parsing() {
        assert_eq!(parse_selector("0,3,7-9", 20).unwrap(), vec![0, 3, 7, 8, 9]);
        assert_eq!(parse_selector("4-4", 5).unwrap(), vec![4]);
        assert_eq!(parse_selector("3,1,3", 5).unwrap(), vec![1, 3]);
        assert!(parse_selector("5", 5).is_err());
        assert!(parse_selector("3-1", 5).is_err());
        assert!(parse_selector("x", 5).is_err());
        assert!(parse_selector("", 5).is_err());
    }

    #[test]
    fn partial_generation_settings_keep_other_defaults() {
        let json = r#"{
            "data": { "synthetic": {} }, "model": { "train": {} },
            "generation": { "sigma2": 0.02, "m": 0.04 }
        }"#;
        let cfg = parse(json).unwrap();
        assert_eq!(cfg.generation.sigma2, 0.02);
        assert_eq!(cfg.generation.m, 0.04);
        assert_eq!(cfg.generation.k, 500);
        assert_eq!(cfg.generation.max_inner_iters, 1000);
    }
}
