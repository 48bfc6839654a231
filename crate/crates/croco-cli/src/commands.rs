//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use croco::bench::{self, SweepKey};
use croco::generators::{self, GenerationResult, Method};
use croco::nn::MlpClassifier;
use croco::noise::{derive_seed, NoiseSpec};
use croco::robustness;
use croco::{Error, Result};

use crate::config::{parse_selector, RunConfig};

/// One generated counterfactual as written by `generate` and read back by
/// `evaluate`. `x` and `result.x_cf` live in normalized feature space; the
/// `_denormalized` fields are in the original units.
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceResult {
    pub method: Method,
    pub instance: usize,
    pub sigma2: f64,
    pub target: f64,
    pub x: Vec<f64>,
    pub x_denormalized: Vec<f64>,
    pub x_cf_denormalized: Vec<f64>,
    pub result: GenerationResult,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn method_tag(method: Method) -> u64 {
    match method {
        Method::Wachter => 1,
        Method::Probe => 2,
        Method::Croco => 3,
    }
}

/// Indices of rows the model assigns the unfavorable class, in row order.
fn unfavorable_rows(model: &MlpClassifier, dataset: &croco::data::Dataset) -> Result<Vec<usize>> {
    let mut rows = Vec::new();
    for i in 0..dataset.n_rows() {
        if model.predict_class(dataset.row(i))? == 0 {
            rows.push(i);
        }
    }
    Ok(rows)
}

/// Trains the configured model, saves its weights, and writes a metrics
/// summary next to them.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<()> {
    if config.model.train.is_none() {
        return Err(Error::Config(
            "model: source is a weights file; switch to a train block to use the train command".into(),
        ));
    }
    ensure_dir(out_dir)?;
    let dataset = config.load_dataset()?;
    let (model, outcome) = config.load_model(&dataset)?;
    let outcome = outcome.expect("train source always yields an outcome");

    let weights_path = out_dir.join("model.json");
    model.save_weights(&weights_path)?;

    #[derive(Serialize)]
    struct Metrics {
        layer_dims: Vec<usize>,
        threshold: f64,
        final_loss: f64,
        train_accuracy: f64,
        test_accuracy: Option<f64>,
    }
    let metrics = Metrics {
        layer_dims: model.layer_dims().to_vec(),
        threshold: model.threshold(),
        final_loss: outcome.final_loss,
        train_accuracy: outcome.train_accuracy,
        test_accuracy: outcome.test_accuracy,
    };
    write_json(&out_dir.join("train_metrics.json"), &metrics)?;

    println!(
        "trained {:?}: loss {:.4}, train accuracy {:.4}, test accuracy {}",
        metrics.layer_dims,
        metrics.final_loss,
        metrics.train_accuracy,
        metrics
            .test_accuracy
            .map_or("n/a".to_string(), |a| format!("{a:.4}")),
    );
    println!("weights written to {}", weights_path.display());
    Ok(())
}

/// Generates one counterfactual per configured method and selected
/// instance, writing a JSON result file each.
pub fn cmd_generate(config: &RunConfig, selector: Option<&str>, out_dir: &Path) -> Result<()> {
    let dataset = config.load_dataset()?;
    config.check_croco_reachability(config.model_threshold()?, &[config.generation.target])?;
    let (model, _) = config.load_model(&dataset)?;

    let instances = match selector {
        Some(s) => parse_selector(s, dataset.n_rows())?,
        None => {
            let mut rows = unfavorable_rows(&model, &dataset)?;
            rows.truncate(config.instances_per_cell);
            rows
        }
    };
    if instances.is_empty() {
        return Err(Error::Precondition(
            "no instances to explain: the model assigns every row the favorable class".into(),
        ));
    }

    let gen_dir = out_dir.join("generate");
    ensure_dir(&gen_dir)?;
    let mut written = Vec::new();
    for &method in &config.methods {
        for &instance in &instances {
            let seed = derive_seed(config.seed, &[method_tag(method), instance as u64]);
            let mut cfg = config.base_generation_config(&dataset, seed)?;
            cfg.method = method;
            let x = dataset.row(instance);
            let result = generators::generate(&model, x, &cfg)?;
            let record = InstanceResult {
                method,
                instance,
                sigma2: config.generation.sigma2,
                target: config.generation.target,
                x: x.to_vec(),
                x_denormalized: dataset.denormalize_row(x)?,
                x_cf_denormalized: dataset.denormalize_row(&result.x_cf)?,
                result,
            };
            let path = gen_dir.join(format!("{method}_{instance:04}.json"));
            write_json(&path, &record)?;
            info!(
                "{method} instance {instance}: converged={} distance={:.4} bound={:.4}",
                record.result.converged,
                record.result.delta.iter().map(|d| d.abs()).sum::<f64>(),
                record.result.estimate.upper_bound,
            );
            written.push(path);
        }
    }
    println!("wrote {} result files to {}", written.len(), gen_dir.display());
    Ok(())
}

/// Runs the full benchmark sweep and emits the four CSV artifacts plus a
/// raw record dump.
pub fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<()> {
    config.check_croco_reachability(config.model_threshold()?, &config.target_grid)?;
    let dataset = config.load_dataset()?;
    let (model, _) = config.load_model(&dataset)?;

    let mut rows = unfavorable_rows(&model, &dataset)?;
    rows.truncate(config.instances_per_cell);
    if rows.is_empty() {
        return Err(Error::Precondition(
            "no instances to sweep: the model assigns every row the favorable class".into(),
        ));
    }
    let instances: Vec<Vec<f64>> = rows.iter().map(|&i| dataset.row(i).to_vec()).collect();
    info!(
        "sweep: {} methods x {} sigma2 x {} targets x {} instances",
        config.methods.len(),
        config.sigma2_grid.len(),
        config.target_grid.len(),
        instances.len()
    );

    let base = config.base_generation_config(&dataset, config.seed)?;
    let records = bench::run_sweep(
        &model,
        &instances,
        &base,
        &config.sigma2_grid,
        &config.target_grid,
        &config.methods,
        config.k_eval,
        config.seed,
    )?;

    ensure_dir(out_dir)?;
    bench::emit_tradeoff(&records, &out_dir.join("tradeoff.csv"))?;
    bench::emit_validity_heatmap(&records, &out_dir.join("validity_heatmap.csv"))?;
    bench::emit_target_comparison(&records, &out_dir.join("target_comparison.csv"))?;
    bench::emit_bound_check(&records, &out_dir.join("bound_check.csv"))?;
    write_json(&out_dir.join("records.json"), &records)?;
    println!(
        "swept {} records; artifacts in {} (tradeoff, validity_heatmap, target_comparison, bound_check)",
        records.len(),
        out_dir.display()
    );
    Ok(())
}

/// Prints the sample count K needed for each (m, confidence) pair.
pub fn cmd_bound_table(m_list: &[f64], confidence_list: &[f64], out_dir: Option<&Path>) -> Result<()> {
    let default_m = [0.02, 0.05, 0.1, 0.15, 0.2];
    let default_c = [0.9, 0.95, 0.99, 0.999, 0.99995];
    let ms: &[f64] = if m_list.is_empty() { &default_m } else { m_list };
    let cs: &[f64] = if confidence_list.is_empty() { &default_c } else { confidence_list };

    let mut table = String::from("m,confidence,k\n");
    for &m in ms {
        for &c in cs {
            let k = robustness::min_samples(m, c)?;
            table.push_str(&format!("{m},{c},{k}\n"));
        }
    }
    print!("{table}");
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        let path = dir.join("bound_table.csv");
        fs::write(&path, &table).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        info!("bound table written to {}", path.display());
    }
    Ok(())
}

/// Re-scores result files produced by `generate` with fresh draws and
/// writes the records as JSON.
pub fn cmd_evaluate(config: &RunConfig, results: &Path, out_dir: &Path) -> Result<()> {
    let dataset = config.load_dataset()?;
    let (model, _) = config.load_model(&dataset)?;

    let mut files: Vec<PathBuf> = if results.is_dir() {
        fs::read_dir(results)
            .map_err(|source| Error::Io {
                path: results.display().to_string(),
                source,
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect()
    } else {
        vec![results.to_path_buf()]
    };
    files.sort();
    if files.is_empty() {
        return Err(Error::Precondition(format!(
            "no .json result files under {}",
            results.display()
        )));
    }

    let mut records = Vec::with_capacity(files.len());
    for path in &files {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let item: InstanceResult = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("result file {}: {e}", path.display())))?;
        let noise = NoiseSpec::gaussian(item.sigma2, dataset.n_cols())?
            .with_frozen(dataset.frozen_mask())?
            .with_seed(derive_seed(config.seed, &[method_tag(item.method), item.instance as u64]));
        let key = SweepKey {
            method: item.method,
            sigma2: Some(item.sigma2),
            target: Some(item.target),
            instance: item.instance,
        };
        records.push(bench::evaluate(&model, &item.x, &item.result, config.k_eval, &noise, key)?);
    }

    ensure_dir(out_dir)?;
    write_json(&out_dir.join("evaluation.json"), &records)?;
    let validity = records.iter().filter(|r| r.validity == 1).count();
    let mean_gamma: f64 = records.iter().map(|r| r.gamma_eval).sum::<f64>() / records.len() as f64;
    println!(
        "evaluated {} counterfactuals: {} valid, mean invalidation rate {:.4}; records in {}",
        records.len(),
        validity,
        mean_gamma,
        out_dir.join("evaluation.json").display()
    );
    Ok(())
}
