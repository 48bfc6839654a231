//! Counterfactual generators: Wachter, PROBE, and CROCO.
//!
//! All three run the same gradient-descent engine over a sparse change
//! vector delta, differing in their loss and stopping rule:
//!
//! * Wachter descends `validity_loss + lambda * ||delta||_1` and stops at
//!   the first valid iterate.
//! * PROBE adds a hinge on a first-order Gaussian approximation of the
//!   invalidation rate and stops when that approximation reaches its
//!   target. The approximation can be wrong about the true rate; that is a
//!   property of the method, deliberately kept.
//! * CROCO adds a squared pull of the certified ceiling
//!   `(m + theta_tilde)/(1 - t)` toward the target and stops only when the
//!   ceiling, recomputed on fresh draws, sits at or below it. Convergence
//!   therefore carries a distribution-free guarantee on the true rate.
//!
//! The proximity weight lambda anneals from `lambda_init` downward by
//! `lambda_decrement` per outer round (floored at zero), trading sparsity
//! pressure away when the harder terms cannot be satisfied.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::nn::{MlpClassifier, Workspace};
use crate::noise::NoiseSpec;
use crate::robustness::{self, RobustnessEstimate};

/// Gradient norms below this floor are treated as vanishing when forming
/// PROBE's first-order estimate.
const PROBE_GRAD_FLOOR: f64 = 1e-12;
/// Step size for the finite-difference Hessian-vector product inside
/// PROBE's gradient.
const PROBE_HVP_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wachter,
    Probe,
    Croco,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Wachter => "wachter",
            Method::Probe => "probe",
            Method::Croco => "croco",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wachter" => Ok(Method::Wachter),
            "probe" => Ok(Method::Probe),
            "croco" => Ok(Method::Croco),
            other => Err(Error::Parse(format!(
                "unknown method '{other}' (expected wachter, probe, or croco)"
            ))),
        }
    }
}

/// Penalty pulling the classifier output toward the flipped class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityLoss {
    Squared,
    CrossEntropy,
}

/// Whether estimator draws are redrawn every iteration or fixed once.
/// `Fixed` exists for gradient checks, where value and finite differences
/// must see identical noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawMode {
    Fresh,
    Fixed,
}

/// Everything a generation run needs besides the model and the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub method: Method,
    /// Rate target: the ceiling target for CROCO, the approximation target
    /// for PROBE; ignored by Wachter.
    pub target: f64,
    pub noise: NoiseSpec,
    /// Estimator sample count per iteration.
    pub k: usize,
    /// Hoeffding tightness of the ceiling.
    pub m: f64,
    pub learning_rate: f64,
    pub lambda_init: f64,
    pub lambda_decrement: f64,
    /// Gradient steps per lambda value.
    pub max_inner_iters: usize,
    /// Cap on lambda rounds; the schedule also ends after its zero round.
    pub max_outer_steps: usize,
    pub validity_loss: ValidityLoss,
    pub draw_mode: DrawMode,
    pub record_trace: bool,
}

impl GenerationConfig {
    pub fn new(method: Method, noise: NoiseSpec) -> Self {
        GenerationConfig {
            method,
            target: 0.35,
            noise,
            k: 500,
            m: 0.1,
            learning_rate: 0.001,
            lambda_init: 1.0,
            lambda_decrement: 0.25,
            max_inner_iters: 1000,
            max_outer_steps: 8,
            validity_loss: ValidityLoss::Squared,
            draw_mode: DrawMode::Fresh,
            record_trace: false,
        }
    }

    /// Validates ranges common to every method plus the method-specific
    /// requirements against the model that will be optimized.
    pub fn validate(&self, model: &MlpClassifier) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and positive",
                self.learning_rate
            )));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_init {} must be finite and non-negative",
                self.lambda_init
            )));
        }
        if !(self.lambda_decrement >= 0.0 && self.lambda_decrement.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_decrement {} must be finite and non-negative",
                self.lambda_decrement
            )));
        }
        if !(self.target > 0.0 && self.target < 1.0) {
            return Err(Error::Config(format!("target {} must lie in (0, 1)", self.target)));
        }
        if self.k == 0 {
            return Err(Error::Config("sample count K must be at least 1".into()));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Config(format!("tightness m = {} must be finite and positive", self.m)));
        }
        if self.max_inner_iters == 0 || self.max_outer_steps == 0 {
            return Err(Error::Config(
                "max_inner_iters and max_outer_steps must be at least 1".into(),
            ));
        }
        if self.noise.dim() != model.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "noise dimension {} does not match model input {}",
                self.noise.dim(),
                model.input_dim()
            )));
        }
        let t = model.threshold();
        match self.method {
            Method::Wachter => {}
            Method::Probe => {
                if self.noise.gaussian_variance().is_none() {
                    return Err(Error::Config(
                        "the probe method requires Gaussian noise".into(),
                    ));
                }
            }
            Method::Croco => {
                if t >= 1.0 {
                    return Err(Error::Config(format!(
                        "threshold {t} must be below 1 for the ceiling (m + theta)/(1 - t)"
                    )));
                }
                let floor = self.m / (1.0 - t);
                if self.target <= floor {
                    return Err(Error::Config(format!(
                        "target {} is unreachable: the ceiling (m + theta)/(1 - t) is at least \
                         m/(1 - t) = {floor} because the soft rate is non-negative; lower m or \
                         raise the target",
                        self.target
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One optimizer iteration as logged when `record_trace` is set. Values
/// describe the iterate before the step taken at `iteration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub lambda: f64,
    pub f_value: f64,
    pub validity_loss: f64,
    /// `lambda * ||delta||_1`.
    pub proximity: f64,
    /// Method robustness term: CROCO's squared ceiling pull or PROBE's
    /// hinge; absent for Wachter.
    pub robustness: Option<f64>,
    pub theta_tilde: Option<f64>,
    /// CROCO's ceiling `(m + theta_tilde)/(1 - t)`.
    pub bound: Option<f64>,
}

/// Outcome of one generation run. `delta` is exactly zero on frozen
/// dimensions. If `converged` is false the result is best-effort: the most
/// robust valid iterate seen, or failing that the invalid iterate closest
/// to flipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub delta: Vec<f64>,
    pub x_cf: Vec<f64>,
    pub converged: bool,
    pub final_lambda: f64,
    /// Gradient steps taken.
    pub iterations: usize,
    /// Robustness reading at the returned `x_cf`: the exit-check estimate
    /// when converged, otherwise a fresh recomputation.
    pub estimate: RobustnessEstimate,
    pub trace: Vec<TraceStep>,
}

/// Validity penalty `l(p, target_class)`.
pub fn validity_loss_value(kind: ValidityLoss, p: f64, target_class: u8) -> f64 {
    let y = target_class as f64;
    match kind {
        ValidityLoss::Squared => (p - y) * (p - y),
        ValidityLoss::CrossEntropy => {
            if target_class == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        }
    }
}

/// Derivative of [`validity_loss_value`] in `p`.
pub fn validity_loss_derivative(kind: ValidityLoss, p: f64, target_class: u8) -> f64 {
    let y = target_class as f64;
    match kind {
        ValidityLoss::Squared => 2.0 * (p - y),
        ValidityLoss::CrossEntropy => {
            if target_class == 1 {
                -1.0 / p
            } else {
                1.0 / (1.0 - p)
            }
        }
    }
}

fn l1_norm(delta: &[f64]) -> f64 {
    delta.iter().map(|v| v.abs()).sum()
}

/// Subgradient of `||delta||_1`, taken as 0 at exactly 0 so untouched
/// coordinates stay untouched.
fn l1_subgradient(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// CROCO loss at `x + delta` under fixed noise draws: the three terms, the
/// total, and the exact gradient in `delta` for those draws.
#[derive(Debug, Clone, PartialEq)]
pub struct CrocoLoss {
    /// Squared pull of the ceiling toward the target.
    pub robustness: f64,
    pub validity: f64,
    /// `lambda * ||delta||_1`.
    pub proximity: f64,
    pub total: f64,
    pub theta_tilde: f64,
    pub f_value: f64,
    pub gradient: Vec<f64>,
}

/// Evaluates the CROCO objective and its gradient on the given draws.
/// The gradient is unmasked; the optimizer is responsible for holding
/// frozen dimensions at zero.
pub fn croco_loss(
    model: &MlpClassifier,
    x: &[f64],
    delta: &[f64],
    config: &GenerationConfig,
    lambda: f64,
    noise_draws: &[Vec<f64>],
) -> Result<CrocoLoss> {
    let dim = model.input_dim();
    if x.len() != dim || delta.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "x has {} and delta {} values, model expects {dim}",
            x.len(),
            delta.len()
        )));
    }
    if noise_draws.is_empty() {
        return Err(Error::Config("sample count K must be at least 1".into()));
    }
    let t = model.threshold();
    if t >= 1.0 {
        return Err(Error::Config(format!(
            "threshold {t} must be below 1 for the ceiling (m + theta)/(1 - t)"
        )));
    }
    let target_class = 1 - model.predict_class(x)?;

    let mut ws = model.workspace();
    let mut gbuf = vec![0.0; dim];
    let x_cf: Vec<f64> = x.iter().zip(delta).map(|(a, d)| a + d).collect();

    // Soft rate and its gradient over the shared draws.
    let mut perturbed = vec![0.0; dim];
    let mut theta = 0.0;
    let mut theta_grad = vec![0.0; dim];
    for eps in noise_draws {
        if eps.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "draw has {} values, model expects {dim}",
                eps.len()
            )));
        }
        for i in 0..dim {
            perturbed[i] = x_cf[i] + eps[i];
        }
        let f = model.value_and_input_gradient_ws(&perturbed, &mut ws, &mut gbuf);
        theta += 1.0 - f;
        for i in 0..dim {
            theta_grad[i] -= gbuf[i];
        }
    }
    let k = noise_draws.len() as f64;
    theta /= k;
    for g in &mut theta_grad {
        *g /= k;
    }

    let f_value = model.value_and_input_gradient_ws(&x_cf, &mut ws, &mut gbuf);
    let ceiling = (theta + config.m) / (1.0 - t);
    let gap = ceiling - config.target;
    let robustness = gap * gap;
    let validity = validity_loss_value(config.validity_loss, f_value, target_class);
    let dvalidity = validity_loss_derivative(config.validity_loss, f_value, target_class);
    let proximity = lambda * l1_norm(delta);

    let drob_dtheta = 2.0 * gap / (1.0 - t);
    let gradient: Vec<f64> = (0..dim)
        .map(|i| drob_dtheta * theta_grad[i] + dvalidity * gbuf[i] + lambda * l1_subgradient(delta[i]))
        .collect();

    Ok(CrocoLoss {
        robustness,
        validity,
        proximity,
        total: robustness + validity + proximity,
        theta_tilde: theta,
        f_value,
        gradient,
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// PROBE's first-order Gaussian approximation of the invalidation rate:
/// `Phi((t - f) / sqrt(sigma2 * ||grad f||^2))`, with the gradient norm
/// floored at 1e-12 so a flat classifier yields a smoothed indicator of
/// `f <= t`.
pub fn probe_first_order_estimate(model: &MlpClassifier, x_cf: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Config(format!(
            "noise variance {sigma2} must be finite and positive"
        )));
    }
    let grad = model.input_gradient(x_cf)?;
    let f = model.forward(x_cf)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(PROBE_GRAD_FLOOR);
    let u = (model.threshold() - f) / (sigma2.sqrt() * norm);
    Ok(std_normal().cdf(u))
}

/// PROBE estimate plus its gradient in the point, reusing buffers. The
/// gradient-norm derivative uses a central finite-difference
/// Hessian-vector product along the gradient direction.
#[allow(clippy::too_many_arguments)]
fn probe_estimate_with_gradient(
    model: &MlpClassifier,
    x_cf: &[f64],
    sigma2: f64,
    f_value: f64,
    f_grad: &[f64],
    ws: &mut Workspace,
    scratch_x: &mut [f64],
    scratch_g1: &mut [f64],
    scratch_g2: &mut [f64],
    out_grad: &mut [f64],
) -> f64 {
    let dim = x_cf.len();
    let t = model.threshold();
    let sigma = sigma2.sqrt();
    let true_norm = f_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let norm = true_norm.max(PROBE_GRAD_FLOOR);
    let u = (t - f_value) / (sigma * norm);
    let estimate = std_normal().cdf(u);

    let phi_u = (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if phi_u == 0.0 || true_norm < PROBE_GRAD_FLOOR {
        // Either the CDF is saturated or the norm term is pinned at the
        // floor; in both cases the estimate is locally flat.
        out_grad.iter_mut().for_each(|g| *g = 0.0);
        return estimate;
    }

    // d norm / dx = H v with v the unit gradient direction.
    for i in 0..dim {
        scratch_x[i] = x_cf[i] + PROBE_HVP_STEP * f_grad[i] / norm;
    }
    model.value_and_input_gradient_ws(scratch_x, ws, scratch_g1);
    for i in 0..dim {
        scratch_x[i] = x_cf[i] - PROBE_HVP_STEP * f_grad[i] / norm;
    }
    model.value_and_input_gradient_ws(scratch_x, ws, scratch_g2);

    for i in 0..dim {
        let dnorm = (scratch_g1[i] - scratch_g2[i]) / (2.0 * PROBE_HVP_STEP);
        let du = -f_grad[i] / (sigma * norm) - (t - f_value) * dnorm / (sigma * norm * norm);
        out_grad[i] = phi_u * du;
    }
    estimate
}

/// Generates with the method named in `config.method`.
pub fn generate(model: &MlpClassifier, x: &[f64], config: &GenerationConfig) -> Result<GenerationResult> {
    run(model, x, config, config.method)
}

/// Sparsity-regularized validity search; stops at the first valid iterate.
pub fn wachter_generate(
    model: &MlpClassifier,
    x: &[f64],
    config: &GenerationConfig,
) -> Result<GenerationResult> {
    run(model, x, config, Method::Wachter)
}

/// Validity search steered by the first-order rate approximation; stops
/// when the iterate is valid and the approximation reaches the target.
pub fn probe_generate(
    model: &MlpClassifier,
    x: &[f64],
    config: &GenerationConfig,
) -> Result<GenerationResult> {
    run(model, x, config, Method::Probe)
}

/// Certified-ceiling search; stops when the iterate is valid and the
/// fresh-draw ceiling sits at or below the target.
pub fn croco_generate(
    model: &MlpClassifier,
    x: &[f64],
    config: &GenerationConfig,
) -> Result<GenerationResult> {
    run(model, x, config, Method::Croco)
}

fn run(model: &MlpClassifier, x: &[f64], config: &GenerationConfig, method: Method) -> Result<GenerationResult> {
    let mut cfg_check = config.clone();
    cfg_check.method = method;
    cfg_check.validate(model)?;
    if x.len() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if model.predict_class(x)? != 0 {
        return Err(Error::Precondition(
            "instance is already assigned the favorable class; nothing to generate".into(),
        ));
    }

    let dim = x.len();
    let t = model.threshold();
    let frozen = config.noise.frozen().to_vec();
    let sigma2 = config.noise.gaussian_variance();
    let mut ws = model.workspace();
    let mut delta = vec![0.0; dim];
    let mut x_cf = x.to_vec();
    let mut grad = vec![0.0; dim];
    let mut f_grad = vec![0.0; dim];
    let mut pe_grad = vec![0.0; dim];
    let (mut sx, mut sg1, mut sg2) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);

    let fixed = config.draw_mode == DrawMode::Fixed;
    let needs_draws = method == Method::Croco;
    let mut draws: Vec<Vec<f64>> = if needs_draws {
        vec![vec![0.0; dim]; config.k]
    } else {
        Vec::new()
    };
    // Round 0 is reserved for fixed draws; fresh mode starts there too and
    // advances every iteration.
    let mut round: u64 = 0;
    if needs_draws && fixed {
        fill_draws(&config.noise, 0, &mut draws)?;
        round = 1;
    }

    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut final_lambda = 0.0;
    let mut exit_estimate: Option<RobustnessEstimate> = None;
    // Most robust valid iterate seen, as (delta, method score); lower wins.
    let mut best_valid: Option<(Vec<f64>, f64)> = None;
    // Fallback when nothing was ever valid: the iterate closest to flipping.
    let mut best_invalid: Option<(Vec<f64>, f64)> = None;

    'outer: for outer in 0..config.max_outer_steps {
        let lambda = (config.lambda_init - outer as f64 * config.lambda_decrement).max(0.0);
        final_lambda = lambda;
        for _ in 0..config.max_inner_iters {
            match method {
                Method::Croco => {
                    if !fixed {
                        fill_draws(&config.noise, round, &mut draws)?;
                    }
                    let loss = croco_loss(model, x, &delta, config, lambda, &draws)?;
                    let bound = (loss.theta_tilde + config.m) / (1.0 - t);
                    let valid = loss.f_value > t;
                    if valid {
                        note_best(&mut best_valid, &delta, bound);
                    } else {
                        note_best(&mut best_invalid, &delta, loss.validity);
                    }
                    if config.record_trace {
                        trace.push(TraceStep {
                            iteration: iterations,
                            lambda,
                            f_value: loss.f_value,
                            validity_loss: loss.validity,
                            proximity: loss.proximity,
                            robustness: Some(loss.robustness),
                            theta_tilde: Some(loss.theta_tilde),
                            bound: Some(bound),
                        });
                    }
                    if valid && bound <= config.target {
                        let (gamma_tilde, theta_tilde) = robustness::rates_with_draws(model, &x_cf, &draws)?;
                        exit_estimate = Some(RobustnessEstimate {
                            gamma_tilde,
                            theta_tilde,
                            k: config.k,
                            m: config.m,
                            upper_bound: (theta_tilde + config.m) / (1.0 - t),
                            confidence: robustness::confidence(config.m, config.k)?,
                        });
                        converged = true;
                        break 'outer;
                    }
                    if !fixed {
                        round += 1;
                    }
                    grad.copy_from_slice(&loss.gradient);
                }
                Method::Wachter | Method::Probe => {
                    let f_value = model.value_and_input_gradient_ws(&x_cf, &mut ws, &mut f_grad);
                    let valid = f_value > t;
                    let vloss = validity_loss_value(config.validity_loss, f_value, 1);
                    let dvloss = validity_loss_derivative(config.validity_loss, f_value, 1);
                    let proximity = lambda * l1_norm(&delta);
                    if !valid {
                        note_best(&mut best_invalid, &delta, vloss);
                    }
                    let (exit, robustness_term) = if method == Method::Wachter {
                        if valid {
                            note_best(&mut best_valid, &delta, vloss);
                        }
                        for i in 0..dim {
                            grad[i] = dvloss * f_grad[i] + lambda * l1_subgradient(delta[i]);
                        }
                        (valid, None)
                    } else {
                        let pe = probe_estimate_with_gradient(
                            model,
                            &x_cf,
                            sigma2.expect("validated: probe requires Gaussian noise"),
                            f_value,
                            &f_grad,
                            &mut ws,
                            &mut sx,
                            &mut sg1,
                            &mut sg2,
                            &mut pe_grad,
                        );
                        // hinge max(pe - target, 0): subgradient 0 below target
                        let hinge = (pe - config.target).max(0.0);
                        let hinge_active = if pe > config.target { 1.0 } else { 0.0 };
                        if valid {
                            note_best(&mut best_valid, &delta, pe);
                        }
                        for i in 0..dim {
                            grad[i] = hinge_active * pe_grad[i]
                                + dvloss * f_grad[i]
                                + lambda * l1_subgradient(delta[i]);
                        }
                        (valid && pe <= config.target, Some(hinge))
                    };
                    if config.record_trace {
                        trace.push(TraceStep {
                            iteration: iterations,
                            lambda,
                            f_value,
                            validity_loss: vloss,
                            proximity,
                            robustness: robustness_term,
                            theta_tilde: None,
                            bound: None,
                        });
                    }
                    if exit {
                        converged = true;
                        break 'outer;
                    }
                }
            }
            for i in 0..dim {
                if !frozen[i] {
                    delta[i] -= config.learning_rate * grad[i];
                    x_cf[i] = x[i] + delta[i];
                }
            }
            iterations += 1;
        }
        if lambda == 0.0 {
            break;
        }
    }

    if !converged {
        if let Some((best_delta, _)) = best_valid.or(best_invalid) {
            delta = best_delta;
            for i in 0..dim {
                x_cf[i] = x[i] + delta[i];
            }
        }
    }
    let estimate = match exit_estimate {
        Some(e) => e,
        None => robustness::estimate(model, &x_cf, &config.noise, config.k, config.m, round)?,
    };

    Ok(GenerationResult {
        delta,
        x_cf,
        converged,
        final_lambda,
        iterations,
        estimate,
        trace,
    })
}

fn fill_draws(noise: &NoiseSpec, round: u64, draws: &mut [Vec<f64>]) -> Result<()> {
    for (j, d) in draws.iter_mut().enumerate() {
        noise.sample_into(round, j as u64, d)?;
    }
    Ok(())
}

fn note_best(best: &mut Option<(Vec<f64>, f64)>, delta: &[f64], score: f64) {
    match best {
        Some((_, s)) if *s <= score => {}
        _ => *best = Some((delta.to_vec(), score)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exactly `logistic(scale * (x - shift))` in one dimension.
    fn logistic_1d(scale: f64, shift: f64) -> MlpClassifier {
        MlpClassifier::from_parts(
            vec![1, 2, 1],
            vec![vec![1.0, -1.0], vec![scale, -scale]],
            vec![vec![-shift, shift], vec![0.0]],
            0.5,
        )
        .unwrap()
    }

    /// 2D model `logistic(a (x1 + x2 - 1))`: class-1 region above the
    /// diagonal, exact and easy to reason about.
    fn diagonal_2d(a: f64) -> MlpClassifier {
        MlpClassifier::from_parts(
            vec![2, 2, 1],
            vec![vec![1.0, 1.0, -1.0, -1.0], vec![a, -a]],
            vec![vec![-1.0, 1.0], vec![0.0]],
            0.5,
        )
        .unwrap()
    }

    fn base_config(method: Method, dim: usize, sigma2: f64) -> GenerationConfig {
        let noise = NoiseSpec::gaussian(sigma2, dim).unwrap().with_seed(7);
        GenerationConfig::new(method, noise)
    }

    #[test]
    fn validity_loss_values_and_derivatives() {
        assert_eq!(validity_loss_value(ValidityLoss::Squared, 1.0, 1), 0.0);
        assert_eq!(validity_loss_value(ValidityLoss::Squared, 0.5, 1), 0.25);
        assert!((validity_loss_value(ValidityLoss::CrossEntropy, 1.0 - 1e-15, 1)).abs() < 1e-12);
        let h = 1e-7;
        for kind in [ValidityLoss::Squared, ValidityLoss::CrossEntropy] {
            for target in [0u8, 1u8] {
                for p in [0.1, 0.3, 0.5, 0.9] {
                    let fd = (validity_loss_value(kind, p + h, target)
                        - validity_loss_value(kind, p - h, target))
                        / (2.0 * h);
                    let an = validity_loss_derivative(kind, p, target);
                    let rel = (an - fd).abs() / an.abs().max(1e-10);
                    assert!(rel < 1e-6, "{kind:?} target {target} p {p}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn croco_loss_terms_at_zero_delta() {
        let model = diagonal_2d(4.0);
        let x = [0.2, 0.2];
        let cfg = base_config(Method::Croco, 2, 0.01);
        let draws = cfg.noise.sample_round(0, 64).unwrap();
        let loss = croco_loss(&model, &x, &[0.0, 0.0], &cfg, 1.0, &draws).unwrap();
        assert_eq!(loss.proximity, 0.0);
        assert!(loss.validity > 0.0);
        assert!((loss.total - (loss.robustness + loss.validity)).abs() < 1e-15);
    }

    #[test]
    fn croco_loss_robustness_vanishes_on_target() {
        // Constant model: theta is exact, so pick the target that zeroes
        // the ceiling gap.
        let bias = (0.8f64 / 0.2).ln();
        let model = MlpClassifier::from_parts(
            vec![2, 1, 1],
            vec![vec![0.0, 0.0], vec![0.0]],
            vec![vec![0.0], vec![bias]],
            0.5,
        )
        .unwrap();
        let mut cfg = base_config(Method::Croco, 2, 0.01);
        let theta = 1.0 - 0.8;
        cfg.target = (theta + cfg.m) / 0.5;
        let draws = cfg.noise.sample_round(0, 32).unwrap();
        let loss = croco_loss(&model, &[0.9, 0.9], &[0.0, 0.0], &cfg, 0.5, &draws).unwrap();
        assert!(loss.robustness < 1e-20, "{}", loss.robustness);
    }

    #[test]
    fn croco_loss_gradient_matches_finite_differences() {
        let model = MlpClassifier::random(vec![3, 6, 1], 0.5, 91).unwrap();
        let mut cfg = base_config(Method::Croco, 3, 0.01);
        cfg.draw_mode = DrawMode::Fixed;
        let draws = cfg.noise.sample_round(0, 40).unwrap();
        let x = [0.2, 0.5, 0.8];
        let delta = [0.15, -0.2, 0.1]; // away from zero: L1 term smooth here
        let lambda = 0.6;
        let loss = croco_loss(&model, &x, &delta, &cfg, lambda, &draws).unwrap();
        let h = 1e-5;
        for d in 0..3 {
            let mut dp = delta;
            let mut dm = delta;
            dp[d] += h;
            dm[d] -= h;
            let lp = croco_loss(&model, &x, &dp, &cfg, lambda, &draws).unwrap().total;
            let lm = croco_loss(&model, &x, &dm, &cfg, lambda, &draws).unwrap().total;
            let fd = (lp - lm) / (2.0 * h);
            let an = loss.gradient[d];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "dim {d}: analytic {an} vs fd {fd}");
        }
    }

    #[test]
    fn wachter_crosses_1d_boundary() {
        let model = logistic_1d(10.0, 0.0);
        let x = [-0.3];
        assert_eq!(model.predict_class(&x).unwrap(), 0);
        let cfg = base_config(Method::Wachter, 1, 0.01);
        let res = wachter_generate(&model, &x, &cfg).unwrap();
        assert!(res.converged);
        assert!(
            res.delta[0] > 0.3 && res.delta[0] <= 0.35,
            "delta {}",
            res.delta[0]
        );
        assert_eq!(model.predict_class(&res.x_cf).unwrap(), 1);
    }

    #[test]
    fn already_favorable_instance_is_precondition_error() {
        let model = logistic_1d(10.0, 0.0);
        let cfg = base_config(Method::Wachter, 1, 0.01);
        let err = wachter_generate(&model, &[0.3], &cfg).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn huge_lambda_fails_to_converge() {
        let model = logistic_1d(10.0, 0.0);
        let mut cfg = base_config(Method::Wachter, 1, 0.01);
        cfg.lambda_init = 1e6;
        cfg.max_inner_iters = 50;
        cfg.max_outer_steps = 2;
        let res = wachter_generate(&model, &[-0.3], &cfg).unwrap();
        assert!(!res.converged);
        // The L1 step of size lr*lambda = 1000 oscillates wildly; the result
        // must be the best invalid iterate, not the runaway final one. The
        // decision boundary sits at delta = 0.3, so anything returned stays
        // inside that and moved toward it.
        assert!(res.delta[0] >= 0.0 && res.delta[0] < 0.3, "delta {}", res.delta[0]);
        let f_start = model.forward(&[-0.3]).unwrap();
        let f_end = model.forward(&res.x_cf).unwrap();
        assert!(f_end >= f_start, "best invalid iterate should be closer to flipping");
    }

    #[test]
    fn probe_estimate_boundary_and_saturation() {
        let model = logistic_1d(10.0, 0.0);
        for sigma2 in [0.001, 0.01, 0.1] {
            let pe = probe_first_order_estimate(&model, &[0.0], sigma2).unwrap();
            assert!((pe - 0.5).abs() < 1e-12, "sigma2 {sigma2}: {pe}");
        }
        let far = probe_first_order_estimate(&model, &[2.0], 0.01).unwrap();
        assert!(far < 1e-6, "{far}");
        assert!(probe_first_order_estimate(&model, &[0.0], 0.0).is_err());
        assert!(probe_first_order_estimate(&model, &[0.0], -1.0).is_err());
    }

    #[test]
    fn probe_estimate_flat_model_guard() {
        let flat = MlpClassifier::zeroed(vec![2, 2, 1], 0.5).unwrap();
        // f = 0.5 = t with zero gradient: smoothed indicator gives 1/2
        let pe = probe_first_order_estimate(&flat, &[0.3, 0.3], 0.01).unwrap();
        assert_eq!(pe, 0.5);
    }

    #[test]
    fn probe_estimate_tracks_quadrature_for_small_noise() {
        let model = logistic_1d(10.0, 0.0);
        let sigma2 = 0.001;
        for x in [0.02, 0.05, 0.1] {
            let pe = probe_first_order_estimate(&model, &[x], sigma2).unwrap();
            let noise = NoiseSpec::gaussian(sigma2, 1).unwrap();
            let q = robustness::brute_force_invalidation(&model, &[x], &noise, 512).unwrap();
            assert!((pe - q.gamma).abs() < 0.05, "x {x}: probe {pe} vs oracle {}", q.gamma);
        }
    }

    #[test]
    fn probe_converges_and_meets_its_approximation_target() {
        let model = diagonal_2d(6.0);
        let x = [0.2, 0.2];
        let mut cfg = base_config(Method::Probe, 2, 0.005);
        cfg.target = 0.35;
        let res = probe_generate(&model, &x, &cfg).unwrap();
        assert!(res.converged, "iterations {}", res.iterations);
        assert_eq!(model.predict_class(&res.x_cf).unwrap(), 1);
        let pe = probe_first_order_estimate(&model, &res.x_cf, 0.005).unwrap();
        assert!(pe <= 0.35 + 1e-12, "probe estimate {pe}");
    }

    #[test]
    fn probe_with_half_target_stops_at_validity() {
        // Phi of a negative argument is below 1/2 whenever f > t, so the
        // approximation target 0.5 never delays the stop.
        let model = diagonal_2d(6.0);
        let mut cfg = base_config(Method::Probe, 2, 0.01);
        cfg.target = 0.5;
        cfg.record_trace = true;
        let res = probe_generate(&model, &[0.2, 0.2], &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(model.predict_class(&res.x_cf).unwrap(), 1);
        // the first valid trace step is the last one: validity alone stopped it
        let first_valid = res.trace.iter().position(|s| s.f_value > 0.5);
        assert_eq!(first_valid, Some(res.trace.len() - 1));
    }

    #[test]
    fn probe_requires_gaussian_noise() {
        let model = diagonal_2d(6.0);
        let mut cfg = base_config(Method::Probe, 2, 0.01);
        cfg.noise = NoiseSpec::uniform_ball(0.1, 2).unwrap();
        let err = probe_generate(&model, &[0.2, 0.2], &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn croco_unreachable_target_is_config_error() {
        let model = diagonal_2d(6.0);
        let mut cfg = base_config(Method::Croco, 2, 0.005);
        cfg.target = 0.19; // m/(1-t) = 0.2 with defaults
        let err = croco_generate(&model, &[0.2, 0.2], &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("unreachable"), "{err}");
    }

    #[test]
    fn croco_converges_with_certified_ceiling() {
        let model = diagonal_2d(6.0);
        let x = [0.2, 0.2];
        let mut cfg = base_config(Method::Croco, 2, 0.005);
        cfg.target = 0.35;
        cfg.record_trace = true;
        let res = croco_generate(&model, &x, &cfg).unwrap();
        assert!(res.converged, "iterations {}", res.iterations);
        assert_eq!(model.predict_class(&res.x_cf).unwrap(), 1);
        assert!(res.estimate.upper_bound <= 0.35 + 1e-12, "bound {}", res.estimate.upper_bound);
        // guarantee check on genuinely fresh draws
        let eval = res.estimate; // exit-check estimate
        let fresh = robustness::invalidation_rate_mc(
            &model,
            &res.x_cf,
            &cfg.noise.reseeded(999),
            10_000,
            0,
        )
        .unwrap();
        assert!(fresh <= 0.35, "fresh gamma {fresh} vs bound {}", eval.upper_bound);
        assert!(!res.trace.is_empty());
        assert!(res.trace.iter().all(|s| s.bound.is_some() && s.theta_tilde.is_some()));
    }

    #[test]
    fn croco_exhaustion_returns_best_valid_iterate() {
        // Noise so wide the ceiling can never reach the target: the run
        // must fail but still hand back a valid counterfactual.
        let model = diagonal_2d(6.0);
        let mut cfg = base_config(Method::Croco, 2, 0.25);
        cfg.target = 0.201;
        cfg.k = 100;
        cfg.max_inner_iters = 150;
        cfg.max_outer_steps = 3;
        let res = croco_generate(&model, &[0.2, 0.2], &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(model.predict_class(&res.x_cf).unwrap(), 1);
        assert!(res.estimate.upper_bound.is_finite());
    }

    #[test]
    fn tighter_target_costs_more_distance() {
        let model = diagonal_2d(4.0);
        let mut distances = Vec::new();
        // The tight 0.05 target is allowed to exhaust its budget; the result
        // is then the most robust valid iterate seen, which sits farther out.
        for target in [0.35, 0.05] {
            let mut per_instance = Vec::new();
            for i in 0..100u64 {
                let x = [0.02 + 0.004 * i as f64, 0.03 + 0.0035 * i as f64];
                assert_eq!(model.predict_class(&x).unwrap(), 0);
                let mut cfg = base_config(Method::Croco, 2, 0.01);
                cfg.noise = cfg.noise.with_seed(1000 + i);
                cfg.m = 0.02; // keeps target 0.05 reachable
                cfg.target = target;
                cfg.k = 200;
                cfg.learning_rate = 0.005;
                cfg.max_inner_iters = 300;
                let res = croco_generate(&model, &x, &cfg).unwrap();
                if target == 0.35 {
                    assert!(res.converged, "target {target} instance {i}");
                }
                per_instance.push(res.delta.iter().map(|v| v.abs()).sum::<f64>());
            }
            per_instance.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distances.push(per_instance[per_instance.len() / 2]);
        }
        assert!(
            distances[1] >= distances[0],
            "median distance at 0.05 ({}) should be >= at 0.35 ({})",
            distances[1],
            distances[0]
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let model = diagonal_2d(6.0);
        let cfg = base_config(Method::Croco, 2, 0.01);
        let a = croco_generate(&model, &[0.3, 0.1], &cfg).unwrap();
        let b = croco_generate(&model, &[0.3, 0.1], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_dimensions_never_move() {
        let model = diagonal_2d(6.0);
        for method in [Method::Wachter, Method::Probe, Method::Croco] {
            let mut cfg = base_config(method, 2, 0.01);
            cfg.noise = cfg.noise.with_frozen(vec![false, true]).unwrap();
            let res = generate(&model, &[0.2, 0.5], &cfg).unwrap();
            assert!(res.converged, "{method}");
            assert_eq!(res.delta[1], 0.0, "{method}");
            assert_eq!(res.x_cf[1], 0.5, "{method}");
        }
    }

    #[test]
    fn fixed_draw_mode_is_reproducible_and_converges() {
        let model = diagonal_2d(6.0);
        let mut cfg = base_config(Method::Croco, 2, 0.005);
        cfg.draw_mode = DrawMode::Fixed;
        let a = croco_generate(&model, &[0.25, 0.15], &cfg).unwrap();
        let b = croco_generate(&model, &[0.25, 0.15], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.converged);
    }
}
