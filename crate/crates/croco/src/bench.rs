//! Sweep execution over (method, sigma^2, target) grids and CSV emission.
//!
//! A sweep generates one counterfactual per grid cell and instance, then
//! scores it with fresh evaluation draws that never overlap the draws used
//! during optimization. Four emitters turn the records into the artifacts a
//! plotting tool consumes: a per-cell trade-off table, a validity heatmap,
//! a target-versus-achieved-rate table, and a bound-check table.
//!
//! All emitters sort records by (method, sigma^2, target, instance), render
//! floats to 6 significant digits, and write an explicit `NA` token for
//! cells that have no value, so identical records yield identical bytes
//! regardless of input order or worker count.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{self, GenerationConfig, GenerationResult, Method};
use crate::nn::MlpClassifier;
use crate::noise::{derive_seed, splitmix64, NoiseSpec};
use crate::robustness;

/// Default evaluation sample count: resolves the invalidation rate to about
/// +-0.01 at 95% confidence.
pub const DEFAULT_K_EVAL: usize = 10_000;

/// Missing-value token shared by every CSV artifact.
pub const NA: &str = "NA";

/// Seed tag separating evaluation draws from optimization draws.
const EVAL_SEED_TAG: u64 = 0x6576_616c;

/// Where a record sits in the sweep: the generating method, its grid cell,
/// and the instance index. Wachter ignores the grid, so its records carry
/// `None` in both grid fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepKey {
    pub method: Method,
    pub sigma2: Option<f64>,
    pub target: Option<f64>,
    pub instance: usize,
}

/// One evaluated counterfactual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: Method,
    pub sigma2: Option<f64>,
    pub target: Option<f64>,
    pub instance: usize,
    /// 1 when the model assigns `x_cf` a different class than `x`.
    pub validity: u8,
    /// `||delta||_1`.
    pub distance: f64,
    /// Invalidation rate estimated with fresh evaluation draws.
    pub gamma_eval: f64,
    /// Certified ceiling `(m + theta_tilde)/(1 - t)` carried from generation.
    pub bound: f64,
    pub converged: bool,
}

/// Scores a finished generation: validity, L1 distance, and an invalidation
/// rate measured with `k_eval` draws seeded independently of anything the
/// optimizer saw.
pub fn evaluate(
    model: &MlpClassifier,
    x: &[f64],
    result: &GenerationResult,
    k_eval: usize,
    noise: &NoiseSpec,
    key: SweepKey,
) -> Result<SweepRecord> {
    if k_eval == 0 {
        return Err(Error::Config("evaluation sample count must be at least 1".into()));
    }
    let eval_noise = noise.reseeded(splitmix64(noise.seed() ^ EVAL_SEED_TAG));
    let gamma_eval = robustness::invalidation_rate_mc(model, &result.x_cf, &eval_noise, k_eval, 0)?;
    let validity = u8::from(model.predict_class(&result.x_cf)? != model.predict_class(x)?);
    let distance = result.delta.iter().map(|d| d.abs()).sum();
    Ok(SweepRecord {
        method: key.method,
        sigma2: key.sigma2,
        target: key.target,
        instance: key.instance,
        validity,
        distance,
        gamma_eval,
        bound: result.estimate.upper_bound,
        converged: result.converged,
    })
}

/// Runs the full Cartesian sweep: every grid method visits every
/// (sigma^2, target) cell on every instance; Wachter, which consults
/// neither grid, produces one record per instance generated and evaluated
/// under the smallest grid sigma^2.
///
/// `base` supplies everything but the grid cell: K, m, step size, lambda
/// schedule, budgets, and the frozen-dimension mask of its noise spec. The
/// noise kind is always Gaussian at the cell's sigma^2. Jobs run in
/// parallel with seeds derived from `base_seed` and the cell identity, so
/// the sorted output is byte-stable across worker counts.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    model: &MlpClassifier,
    instances: &[Vec<f64>],
    base: &GenerationConfig,
    sigma2_grid: &[f64],
    target_grid: &[f64],
    methods: &[Method],
    k_eval: usize,
    base_seed: u64,
) -> Result<Vec<SweepRecord>> {
    if !methods.is_empty() && sigma2_grid.is_empty() {
        return Err(Error::Config("sigma^2 grid must be non-empty".into()));
    }
    if methods.iter().any(|m| *m != Method::Wachter) && target_grid.is_empty() {
        return Err(Error::Config("target grid must be non-empty for croco or probe".into()));
    }
    let min_sigma2 = sigma2_grid.iter().copied().fold(f64::INFINITY, f64::min);

    struct Job {
        key: SweepKey,
        seed: u64,
    }
    let mix = |parts: [u64; 4]| derive_seed(base_seed, &parts);
    let method_tag = |m: Method| match m {
        Method::Wachter => 1u64,
        Method::Probe => 2,
        Method::Croco => 3,
    };

    let mut jobs = Vec::new();
    for &method in methods {
        if method == Method::Wachter {
            for instance in 0..instances.len() {
                jobs.push(Job {
                    key: SweepKey { method, sigma2: None, target: None, instance },
                    seed: mix([method_tag(method), 0, 0, instance as u64]),
                });
            }
        } else {
            for (si, &sigma2) in sigma2_grid.iter().enumerate() {
                for (ti, &target) in target_grid.iter().enumerate() {
                    for instance in 0..instances.len() {
                        jobs.push(Job {
                            key: SweepKey {
                                method,
                                sigma2: Some(sigma2),
                                target: Some(target),
                                instance,
                            },
                            seed: mix([
                                method_tag(method),
                                si as u64 + 1,
                                ti as u64 + 1,
                                instance as u64,
                            ]),
                        });
                    }
                }
            }
        }
    }

    let mut records = jobs
        .into_par_iter()
        .map(|job| -> Result<SweepRecord> {
            let sigma2 = job.key.sigma2.unwrap_or(min_sigma2);
            let noise = NoiseSpec::gaussian(sigma2, model.input_dim())?
                .with_frozen(base.noise.frozen().to_vec())?
                .with_seed(job.seed);
            let mut cfg = base.clone();
            cfg.method = job.key.method;
            cfg.noise = noise;
            cfg.record_trace = false;
            if let Some(target) = job.key.target {
                cfg.target = target;
            }
            let x = &instances[job.key.instance];
            let result = generators::generate(model, x, &cfg)?;
            evaluate(model, x, &result, k_eval, &cfg.noise, job.key)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(record_order);
    Ok(records)
}

/// Fraction of records whose measured rate exceeds their certified ceiling.
/// By construction this stays below `1 - confidence(m, K)` plus estimator
/// noise in `gamma_eval`.
pub fn bound_violation_fraction(records: &[SweepRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let violations = records.iter().filter(|r| r.gamma_eval > r.bound).count();
    violations as f64 / records.len() as f64
}

/// Canonical ordering: method name, then sigma^2 (absent first), then
/// target (absent first), then instance.
fn record_order(a: &SweepRecord, b: &SweepRecord) -> Ordering {
    a.method
        .name()
        .cmp(b.method.name())
        .then_with(|| opt_cmp(a.sigma2, b.sigma2))
        .then_with(|| opt_cmp(a.target, b.target))
        .then_with(|| a.instance.cmp(&b.instance))
}

fn opt_cmp(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

/// Renders a float with 6 significant digits, trimming trailing zeros;
/// switches to scientific notation outside [1e-4, 1e6).
pub(crate) fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific float format");
    let e: i32 = exp.parse().expect("scientific float exponent");
    if !(-4..=5).contains(&e) {
        format!("{}e{e}", trim_zeros(mantissa))
    } else {
        let decimals = (5 - e).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_sig6(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_else(|| NA.to_string())
}

fn require_records(records: &[SweepRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::Precondition("no sweep records to emit".into()))
    } else {
        Ok(())
    }
}

fn sorted(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut v = records.to_vec();
    v.sort_by(record_order);
    v
}

fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-cell means and standard deviations of distance and measured rate.
pub fn emit_tradeoff(records: &[SweepRecord], path: &Path) -> Result<()> {
    write_artifact(path, &render_tradeoff(records)?)
}

fn render_tradeoff(records: &[SweepRecord]) -> Result<String> {
    require_records(records)?;
    let records = sorted(records);
    let mut out = String::from(
        "method,sigma2,target,n,mean_distance,sd_distance,mean_gamma_eval,sd_gamma_eval\n",
    );
    let mut i = 0;
    while i < records.len() {
        let cell = (records[i].method, records[i].sigma2, records[i].target);
        let mut j = i;
        while j < records.len()
            && (records[j].method, records[j].sigma2, records[j].target) == cell
        {
            j += 1;
        }
        let group = &records[i..j];
        let distances: Vec<f64> = group.iter().map(|r| r.distance).collect();
        let gammas: Vec<f64> = group.iter().map(|r| r.gamma_eval).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            cell.0,
            opt_sig6(cell.1),
            opt_sig6(cell.2),
            group.len(),
            sig6(mean(&distances)),
            opt_sig6(sample_sd(&distances)),
            sig6(mean(&gammas)),
            opt_sig6(sample_sd(&gammas)),
        );
        i = j;
    }
    Ok(out)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; `None` for fewer than two values.
fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Percent validity per (method, sigma^2) row and target column. Records
/// without grid coordinates (Wachter) do not appear; cells the sweep never
/// visited render as `NA`.
pub fn emit_validity_heatmap(records: &[SweepRecord], path: &Path) -> Result<()> {
    write_artifact(path, &render_validity_heatmap(records)?)
}

fn render_validity_heatmap(records: &[SweepRecord]) -> Result<String> {
    require_records(records)?;
    let records = sorted(records);
    let grid: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.sigma2.is_some() && r.target.is_some())
        .collect();
    let mut targets: Vec<f64> = Vec::new();
    let mut rows: Vec<(Method, f64)> = Vec::new();
    for r in &grid {
        let t = r.target.expect("filtered");
        if !targets.iter().any(|v| v.total_cmp(&t) == Ordering::Equal) {
            targets.push(t);
        }
        let row = (r.method, r.sigma2.expect("filtered"));
        if !rows
            .iter()
            .any(|(m, s)| *m == row.0 && s.total_cmp(&row.1) == Ordering::Equal)
        {
            rows.push(row);
        }
    }
    targets.sort_by(|a, b| a.total_cmp(b));

    let mut out = String::from("method,sigma2");
    for t in &targets {
        let _ = write!(out, ",target_{}", sig6(*t));
    }
    out.push('\n');
    for (method, sigma2) in rows {
        let _ = write!(out, "{method},{}", sig6(sigma2));
        for t in &targets {
            let cell: Vec<f64> = grid
                .iter()
                .filter(|r| {
                    r.method == method
                        && r.sigma2.expect("filtered").total_cmp(&sigma2) == Ordering::Equal
                        && r.target.expect("filtered").total_cmp(t) == Ordering::Equal
                })
                .map(|r| f64::from(r.validity))
                .collect();
            if cell.is_empty() {
                let _ = write!(out, ",{NA}");
            } else {
                let _ = write!(out, ",{}", sig6(100.0 * mean(&cell)));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Per-counterfactual requested target versus measured rate.
pub fn emit_target_comparison(records: &[SweepRecord], path: &Path) -> Result<()> {
    write_artifact(path, &render_target_comparison(records)?)
}

fn render_target_comparison(records: &[SweepRecord]) -> Result<String> {
    require_records(records)?;
    let mut out = String::from("method,sigma2,target,instance,gamma_eval,converged\n");
    for r in sorted(records) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            opt_sig6(r.sigma2),
            opt_sig6(r.target),
            r.instance,
            sig6(r.gamma_eval),
            r.converged,
        );
    }
    Ok(out)
}

/// Per-counterfactual certified ceiling versus measured rate.
pub fn emit_bound_check(records: &[SweepRecord], path: &Path) -> Result<()> {
    write_artifact(path, &render_bound_check(records)?)
}

fn render_bound_check(records: &[SweepRecord]) -> Result<String> {
    require_records(records)?;
    let mut out = String::from("method,sigma2,target,instance,bound,gamma_eval\n");
    for r in sorted(records) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            opt_sig6(r.sigma2),
            opt_sig6(r.target),
            r.instance,
            sig6(r.bound),
            sig6(r.gamma_eval),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robustness::RobustnessEstimate;

    /// 2D model `logistic(a (x1 + x2 - 1))`.
    fn diagonal_2d(a: f64) -> MlpClassifier {
        MlpClassifier::from_parts(
            vec![2, 2, 1],
            vec![vec![1.0, 1.0, -1.0, -1.0], vec![a, -a]],
            vec![vec![-1.0, 1.0], vec![0.0]],
            0.5,
        )
        .unwrap()
    }

    fn dummy_estimate(bound: f64) -> RobustnessEstimate {
        RobustnessEstimate {
            gamma_tilde: 0.0,
            theta_tilde: 0.0,
            k: 1,
            m: 0.1,
            upper_bound: bound,
            confidence: 0.5,
        }
    }

    fn manual_result(x: &[f64], delta: &[f64], bound: f64) -> GenerationResult {
        let x_cf = x.iter().zip(delta).map(|(a, d)| a + d).collect();
        GenerationResult {
            delta: delta.to_vec(),
            x_cf,
            converged: true,
            final_lambda: 0.0,
            iterations: 0,
            estimate: dummy_estimate(bound),
            trace: Vec::new(),
        }
    }

    fn key(method: Method, instance: usize) -> SweepKey {
        SweepKey {
            method,
            sigma2: Some(0.01),
            target: Some(0.35),
            instance,
        }
    }

    fn small_base(dim: usize) -> GenerationConfig {
        let noise = NoiseSpec::gaussian(0.01, dim).unwrap().with_seed(3);
        let mut cfg = GenerationConfig::new(Method::Croco, noise);
        cfg.k = 30;
        cfg.max_inner_iters = 30;
        cfg.max_outer_steps = 2;
        cfg.learning_rate = 0.01;
        cfg
    }

    #[test]
    fn evaluate_zero_delta_is_invalid_with_zero_distance() {
        let model = diagonal_2d(6.0);
        let x = [0.2, 0.2];
        let noise = NoiseSpec::gaussian(0.01, 2).unwrap();
        let res = manual_result(&x, &[0.0, 0.0], 1.0);
        let rec = evaluate(&model, &x, &res, 200, &noise, key(Method::Croco, 0)).unwrap();
        assert_eq!(rec.validity, 0);
        assert_eq!(rec.distance, 0.0);
    }

    #[test]
    fn evaluate_deep_counterfactual_has_negligible_rate() {
        let model = diagonal_2d(6.0);
        let x = [0.2, 0.2];
        let noise = NoiseSpec::gaussian(0.01, 2).unwrap();
        let res = manual_result(&x, &[2.0, 2.0], 0.3);
        let rec = evaluate(&model, &x, &res, 2000, &noise, key(Method::Croco, 1)).unwrap();
        assert_eq!(rec.validity, 1);
        assert!(rec.gamma_eval < 0.01, "{}", rec.gamma_eval);
        assert_eq!(rec.bound, 0.3);
    }

    #[test]
    fn evaluate_distance_is_l1() {
        let model = diagonal_2d(6.0);
        let x = [0.2, 0.2];
        let noise = NoiseSpec::gaussian(0.01, 2).unwrap();
        let res = manual_result(&x, &[0.1, -0.2], 1.0);
        let rec = evaluate(&model, &x, &res, 100, &noise, key(Method::Croco, 2)).unwrap();
        assert!((rec.distance - 0.3).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_zero_k() {
        let model = diagonal_2d(6.0);
        let x = [0.2, 0.2];
        let noise = NoiseSpec::gaussian(0.01, 2).unwrap();
        let res = manual_result(&x, &[0.0, 0.0], 1.0);
        assert!(evaluate(&model, &x, &res, 0, &noise, key(Method::Croco, 0)).is_err());
    }

    #[test]
    fn sweep_cardinality_is_full_grid() {
        let model = diagonal_2d(6.0);
        let instances: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![0.05 + 0.02 * i as f64, 0.1])
            .collect();
        let base = small_base(2);
        let records = run_sweep(
            &model,
            &instances,
            &base,
            &[0.005, 0.02],
            &[0.3, 0.35],
            &[Method::Croco, Method::Probe],
            100,
            11,
        )
        .unwrap();
        assert_eq!(records.len(), 80);
        assert!(records.iter().all(|r| r.sigma2.is_some() && r.target.is_some()));
        assert!(records.iter().all(|r| (0.0..=1.0).contains(&r.gamma_eval)));
        assert!(records.iter().all(|r| r.distance >= 0.0));
    }

    #[test]
    fn wachter_ignores_grid_and_emits_nulls() {
        let model = diagonal_2d(6.0);
        let instances: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 + 0.05 * i as f64, 0.2]).collect();
        let base = small_base(2);
        let records = run_sweep(
            &model,
            &instances,
            &base,
            &[0.005, 0.02],
            &[0.3, 0.35],
            &[Method::Wachter],
            100,
            11,
        )
        .unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.sigma2.is_none() && r.target.is_none()));
        let csv = render_tradeoff(&records).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,sigma2,target,n,mean_distance,sd_distance,mean_gamma_eval,sd_gamma_eval"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("wachter,NA,NA,4,"), "{row}");
    }

    #[test]
    fn sweep_is_deterministic_and_emitters_are_permutation_invariant() {
        let model = diagonal_2d(6.0);
        let instances: Vec<Vec<f64>> = (0..3).map(|i| vec![0.1 + 0.1 * i as f64, 0.2]).collect();
        let base = small_base(2);
        let methods = [Method::Wachter, Method::Croco];
        let a = run_sweep(&model, &instances, &base, &[0.01], &[0.35], &methods, 200, 5).unwrap();
        let b = run_sweep(&model, &instances, &base, &[0.01], &[0.35], &methods, 200, 5).unwrap();
        assert_eq!(a, b);

        let mut shuffled = a.clone();
        shuffled.reverse();
        for render in [
            render_tradeoff,
            render_validity_heatmap,
            render_target_comparison,
            render_bound_check,
        ] {
            assert_eq!(render(&a).unwrap(), render(&shuffled).unwrap());
        }
    }

    #[test]
    fn emitters_reject_empty_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(emit_tradeoff(&[], &path).is_err());
        assert!(emit_validity_heatmap(&[], &path).is_err());
        assert!(emit_target_comparison(&[], &path).is_err());
        assert!(emit_bound_check(&[], &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn single_record_yields_single_row() {
        let rec = SweepRecord {
            method: Method::Croco,
            sigma2: Some(0.01),
            target: Some(0.35),
            instance: 0,
            validity: 1,
            distance: 0.5,
            gamma_eval: 0.1,
            bound: 0.3,
            converged: true,
        };
        let csv = render_tradeoff(&[rec]).unwrap();
        assert_eq!(csv.lines().count(), 2);
        // A lone record has no spread: sd columns fall back to NA.
        assert_eq!(csv.lines().nth(1).unwrap(), "croco,0.01,0.35,1,0.5,NA,0.1,NA");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tradeoff.csv");
        emit_tradeoff(&[rec], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), csv);
    }

    #[test]
    fn heatmap_fills_missing_cells_with_na() {
        let make = |sigma2: f64, target: f64, validity: u8| SweepRecord {
            method: Method::Croco,
            sigma2: Some(sigma2),
            target: Some(target),
            instance: 0,
            validity,
            distance: 0.1,
            gamma_eval: 0.1,
            bound: 0.3,
            converged: true,
        };
        // 2x2 grid with one cell never visited.
        let records = vec![make(0.005, 0.1, 1), make(0.005, 0.35, 1), make(0.02, 0.35, 0)];
        let csv = render_validity_heatmap(&records).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,sigma2,target_0.1,target_0.35");
        assert_eq!(lines[1], "croco,0.005,100,100");
        assert_eq!(lines[2], "croco,0.02,NA,0");
    }

    #[test]
    fn bound_violation_fraction_counts_exceedances() {
        let make = |gamma_eval: f64, bound: f64| SweepRecord {
            method: Method::Croco,
            sigma2: Some(0.01),
            target: Some(0.35),
            instance: 0,
            validity: 1,
            distance: 0.1,
            gamma_eval,
            bound,
            converged: true,
        };
        let records = vec![make(0.1, 0.3), make(0.4, 0.3), make(0.3, 0.3)];
        assert!((bound_violation_fraction(&records) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(bound_violation_fraction(&[]), 0.0);
    }

    #[test]
    fn sig6_rendering() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.005), "0.005");
        assert_eq!(sig6(0.35), "0.35");
        assert_eq!(sig6(-0.35), "-0.35");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(100.0), "100");
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(0.0001), "0.0001");
        assert_eq!(sig6(0.00001), "1e-5");
        assert_eq!(sig6(999999.5), "1e6");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn sweep_rejects_empty_grids() {
        let model = diagonal_2d(6.0);
        let base = small_base(2);
        let instances = vec![vec![0.1, 0.2]];
        assert!(run_sweep(&model, &instances, &base, &[], &[0.35], &[Method::Croco], 10, 1).is_err());
        assert!(run_sweep(&model, &instances, &base, &[0.01], &[], &[Method::Croco], 10, 1).is_err());
        // Wachter needs no target grid.
        assert!(run_sweep(&model, &instances, &base, &[0.01], &[], &[Method::Wachter], 10, 1).is_ok());
    }
}
