//! Invalidation-rate estimators, concentration bounds, and a quadrature
//! oracle.
//!
//! The invalidation rate of a counterfactual is the probability that a
//! perturbation drawn from the noise spec pushes it back to class 0. The
//! Monte-Carlo estimators here (`gamma_tilde` for the hard rate, its soft
//! companion `theta_tilde`) share draws, which makes the scaled inequality
//! `gamma_tilde <= theta_tilde / (1 - t)` hold per draw, not just in
//! expectation. `upper_bound`, `confidence`, and `min_samples` form the
//! Hoeffding calculus that turns a soft estimate into a probabilistic
//! ceiling on the true rate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::nn::MlpClassifier;
use crate::noise::{NoiseKind, NoiseSpec};

/// A Monte-Carlo robustness reading at one point: both estimators, the
/// sample count and tightness that produced them, and the derived ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessEstimate {
    /// Hard-rate estimate; always a multiple of `1/k`.
    pub gamma_tilde: f64,
    /// Soft-rate estimate: mean class-0 probability under perturbation.
    pub theta_tilde: f64,
    pub k: usize,
    pub m: f64,
    /// `(m + theta_tilde) / (1 - t)`; exceeds the true rate with
    /// probability at least `confidence`.
    pub upper_bound: f64,
    /// `1 - exp(-2 m^2 k)`.
    pub confidence: f64,
}

fn check_dims(model: &MlpClassifier, x_cf: &[f64], noise: &NoiseSpec) -> Result<()> {
    if x_cf.len() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "point has {} values, model expects {}",
            x_cf.len(),
            model.input_dim()
        )));
    }
    if noise.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "noise dimension {} does not match model input {}",
            noise.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Hard and soft invalidation estimates from one shared draw stream.
/// `round` selects the draw round, so repeated calls with the same
/// arguments see identical noise.
pub fn invalidation_rates_mc(
    model: &MlpClassifier,
    x_cf: &[f64],
    noise: &NoiseSpec,
    k: usize,
    round: u64,
) -> Result<(f64, f64)> {
    check_dims(model, x_cf, noise)?;
    if k == 0 {
        return Err(Error::Config("sample count K must be at least 1".into()));
    }
    let dim = x_cf.len();
    let t = model.threshold();
    let mut eps = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    let mut ws = model.workspace();
    let mut invalid = 0usize;
    let mut soft = 0.0;
    for j in 0..k {
        noise.sample_into(round, j as u64, &mut eps)?;
        for i in 0..dim {
            x[i] = x_cf[i] + eps[i];
        }
        let f = model.forward_ws(&x, &mut ws);
        if f <= t {
            invalid += 1;
        }
        soft += 1.0 - f;
    }
    Ok((invalid as f64 / k as f64, soft / k as f64))
}

/// Fraction of perturbed copies of `x_cf` that the model sends to class 0.
pub fn invalidation_rate_mc(
    model: &MlpClassifier,
    x_cf: &[f64],
    noise: &NoiseSpec,
    k: usize,
    round: u64,
) -> Result<f64> {
    invalidation_rates_mc(model, x_cf, noise, k, round).map(|(g, _)| g)
}

/// Mean class-0 probability of perturbed copies of `x_cf`; differentiable
/// in `x_cf` for fixed draws.
pub fn soft_invalidation_mc(
    model: &MlpClassifier,
    x_cf: &[f64],
    noise: &NoiseSpec,
    k: usize,
    round: u64,
) -> Result<f64> {
    invalidation_rates_mc(model, x_cf, noise, k, round).map(|(_, s)| s)
}

/// Both estimators over caller-supplied draws (fixed-draw mode: the same
/// draws back the loss value and its gradient inside one optimizer step).
pub fn rates_with_draws(model: &MlpClassifier, x_cf: &[f64], draws: &[Vec<f64>]) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::Config("sample count K must be at least 1".into()));
    }
    let dim = x_cf.len();
    if dim != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "point has {dim} values, model expects {}",
            model.input_dim()
        )));
    }
    let t = model.threshold();
    let mut x = vec![0.0; dim];
    let mut ws = model.workspace();
    let mut invalid = 0usize;
    let mut soft = 0.0;
    for eps in draws {
        if eps.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "draw has {} values, point has {dim}",
                eps.len()
            )));
        }
        for i in 0..dim {
            x[i] = x_cf[i] + eps[i];
        }
        let f = model.forward_ws(&x, &mut ws);
        if f <= t {
            invalid += 1;
        }
        soft += 1.0 - f;
    }
    Ok((invalid as f64 / draws.len() as f64, soft / draws.len() as f64))
}

/// Probabilistic ceiling `(m + theta_tilde) / (1 - t)` on the true
/// invalidation rate.
pub fn upper_bound(theta_tilde: f64, m: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Config(format!("threshold {t} must lie in [0, 1)")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config(format!("tightness m = {m} must be finite and positive")));
    }
    if !theta_tilde.is_finite() {
        return Err(Error::Config(format!("theta_tilde = {theta_tilde} is not finite")));
    }
    Ok((m + theta_tilde) / (1.0 - t))
}

/// Probability that the ceiling holds: `1 - exp(-2 m^2 K)`.
pub fn confidence(m: f64, k: usize) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config(format!("tightness m = {m} must be finite and positive")));
    }
    if k == 0 {
        return Err(Error::Config("sample count K must be at least 1".into()));
    }
    Ok(1.0 - (-2.0 * m * m * k as f64).exp())
}

/// Smallest K whose confidence reaches `required_confidence`:
/// `ceil(ln(1/(1-c)) / (2 m^2))`.
pub fn min_samples(m: f64, required_confidence: f64) -> Result<usize> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config(format!("tightness m = {m} must be finite and positive")));
    }
    let c = required_confidence;
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Config(format!("required confidence {c} must lie in (0, 1)")));
    }
    let k = ((1.0 / (1.0 - c)).ln() / (2.0 * m * m)).ceil();
    if !k.is_finite() || k > usize::MAX as f64 {
        return Err(Error::Config(format!(
            "required confidence {c} needs an unrepresentable sample count"
        )));
    }
    Ok((k as usize).max(1))
}

/// Full robustness reading at `x_cf`: shared-draw estimators plus the
/// Hoeffding ceiling and its confidence.
pub fn estimate(
    model: &MlpClassifier,
    x_cf: &[f64],
    noise: &NoiseSpec,
    k: usize,
    m: f64,
    round: u64,
) -> Result<RobustnessEstimate> {
    let (gamma_tilde, theta_tilde) = invalidation_rates_mc(model, x_cf, noise, k, round)?;
    let upper = upper_bound(theta_tilde, m, model.threshold())?;
    let conf = confidence(m, k)?;
    Ok(RobustnessEstimate {
        gamma_tilde,
        theta_tilde,
        k,
        m,
        upper_bound: upper,
        confidence: conf,
    })
}

/// Quadrature values for the true rates on a truncated support, plus the
/// probability mass the truncation discards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub gamma: f64,
    pub theta: f64,
    /// Upper bound on `|reported - untruncated|` for either rate.
    pub truncation_mass: f64,
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss-Legendre grid on `[-half, half]` with roughly
/// `resolution` nodes (rounded up to full panels).
fn composite_grid(half: f64, resolution: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = resolution.div_ceil(8);
    let width = 2.0 * half / panels as f64;
    let mut nodes = Vec::with_capacity(panels * 8);
    let mut weights = Vec::with_capacity(panels * 8);
    for p in 0..panels {
        let a = -half + p as f64 * width;
        let mid = a + width / 2.0;
        for j in 0..8 {
            nodes.push(mid + width / 2.0 * GL8_NODES[j]);
            weights.push(width / 2.0 * GL8_WEIGHTS[j]);
        }
    }
    (nodes, weights)
}

/// True invalidation rates by dense tensor-product quadrature over the
/// truncated noise support (6 standard deviations for Gaussian noise, the
/// exact ball otherwise). Supports at most three free dimensions; the
/// result is self-normalized, so constant classifiers integrate exactly.
pub fn brute_force_invalidation(
    model: &MlpClassifier,
    x_cf: &[f64],
    noise: &NoiseSpec,
    grid_resolution: usize,
) -> Result<QuadratureResult> {
    check_dims(model, x_cf, noise)?;
    if grid_resolution == 0 {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    let free: Vec<usize> = noise
        .frozen()
        .iter()
        .enumerate()
        .filter(|&(_, &f)| !f)
        .map(|(i, _)| i)
        .collect();
    let d = free.len();
    if d > 3 {
        return Err(Error::Config(format!(
            "quadrature supports at most 3 free dimensions, got {d}"
        )));
    }

    let (half, ball_radius, truncation_mass) = match noise.kind() {
        NoiseKind::Gaussian { variance } => {
            let sd = variance.sqrt();
            let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
            let in_box = 2.0 * std_normal.cdf(6.0) - 1.0;
            (6.0 * sd, None, 1.0 - in_box.powi(d as i32))
        }
        NoiseKind::UniformBall { radius } => (radius, Some(radius), 0.0),
    };
    let (nodes, mut weights) = composite_grid(half, grid_resolution);
    if let NoiseKind::Gaussian { variance } = noise.kind() {
        let sd = variance.sqrt();
        let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        for (w, &x) in weights.iter_mut().zip(&nodes) {
            *w *= norm * (-x * x / (2.0 * variance)).exp();
        }
    }

    let n = nodes.len();
    let t = model.threshold();
    let mut ws = model.workspace();
    let mut x = x_cf.to_vec();
    let mut idx = vec![0usize; d];
    let total: usize = n.pow(d as u32);
    let (mut mass, mut gamma_raw, mut theta_raw) = (0.0, 0.0, 0.0);
    for _ in 0..total {
        let mut w = 1.0;
        let mut r2 = 0.0;
        for (pos, &i) in idx.iter().enumerate() {
            let v = nodes[i];
            x[free[pos]] = x_cf[free[pos]] + v;
            w *= weights[i];
            r2 += v * v;
        }
        let inside = match ball_radius {
            Some(r) => r2 <= r * r,
            None => true,
        };
        if inside {
            let f = model.forward_ws(&x, &mut ws);
            mass += w;
            if f <= t {
                gamma_raw += w;
            }
            theta_raw += w * (1.0 - f);
        }
        for pos in (0..d).rev() {
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
    Ok(QuadratureResult {
        gamma: gamma_raw / mass,
        theta: theta_raw / mass,
        truncation_mass,
    })
}
