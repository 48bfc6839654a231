//! Dense feed-forward binary classifier with exact input gradients.
//!
//! Hidden layers use ReLU, the single output unit a logistic squashed into
//! the open interval `(0, 1)` so log-losses and odds ratios stay finite.
//! The class decision is `f(x) > t` for a decision threshold `t` stored with
//! the model. Gradients come from backpropagation, not finite differences;
//! the generators differentiate through this exact path.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Output probabilities are clamped into `[P_MIN, 1 - P_MIN]`.
const P_MIN: f64 = 1e-15;

fn logistic(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// Multilayer perceptron with at least one hidden layer and a scalar
/// logistic output. Weight matrices are stored row-major: `weights[l]` has
/// shape `dims[l+1] x dims[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    threshold: f64,
}

/// Scratch buffers for repeated forward/backward passes. Reusing one
/// workspace across millions of evaluations keeps the hot loops free of
/// allocation.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl MlpClassifier {
    /// Builds a model from explicit parameters, validating every shape.
    pub fn from_parts(
        dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        threshold: f64,
    ) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Config(format!(
                "layer_dims {dims:?} has {} entries; need input, at least one hidden, output",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer_dims {dims:?} contains a zero width")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::Config(format!(
                "output layer width {} must be 1",
                dims.last().unwrap()
            )));
        }
        let n_layers = dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::ShapeMismatch(format!(
                "{} weight and {} bias matrices for {n_layers} layers",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..n_layers {
            let want = dims[l + 1] * dims[l];
            if weights[l].len() != want {
                return Err(Error::ShapeMismatch(format!(
                    "weights[{l}] has {} values, expected {} ({}x{})",
                    weights[l].len(),
                    want,
                    dims[l + 1],
                    dims[l]
                )));
            }
            if biases[l].len() != dims[l + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "biases[{l}] has {} values, expected {}",
                    biases[l].len(),
                    dims[l + 1]
                )));
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("layer {l} contains a non-finite parameter")));
            }
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} is outside [0, 1]")));
        }
        Ok(MlpClassifier { dims, weights, biases, threshold })
    }

    /// All-zero parameters; `forward` is identically 0.5.
    pub fn zeroed(dims: Vec<usize>, threshold: f64) -> Result<Self> {
        let n = dims.len().saturating_sub(1);
        let weights = (0..n).map(|l| vec![0.0; dims[l + 1] * dims[l]]).collect();
        let biases = (0..n).map(|l| vec![0.0; dims[l + 1]]).collect();
        Self::from_parts(dims, weights, biases, threshold)
    }

    /// Xavier-uniform initialization, deterministic in `seed`.
    pub fn random(dims: Vec<usize>, threshold: f64, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(dims, threshold)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..model.weights.len() {
            let bound = (6.0 / (model.dims[l] + model.dims[l + 1]) as f64).sqrt();
            for w in &mut model.weights[l] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn workspace(&self) -> Workspace {
        let n = self.dims.len() - 1;
        Workspace {
            acts: self.dims.iter().map(|&d| vec![0.0; d]).collect(),
            zs: (0..n).map(|l| vec![0.0; self.dims[l + 1]]).collect(),
            deltas: (0..n).map(|l| vec![0.0; self.dims[l + 1]]).collect(),
        }
    }

    /// Classifier output in `(0, 1)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut ws = self.workspace();
        Ok(self.forward_ws(x, &mut ws))
    }

    /// Hard class under the stored threshold: `1` iff `f(x) > t` (strict).
    pub fn predict_class(&self, x: &[f64]) -> Result<u8> {
        Ok((self.forward(x)? > self.threshold) as u8)
    }

    /// Gradient of the output probability with respect to the input.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = self.workspace();
        let mut grad = vec![0.0; x.len()];
        self.value_and_input_gradient_ws(x, &mut ws, &mut grad);
        Ok(grad)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims[0] {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.dims[0]
            )));
        }
        Ok(())
    }

    /// Unchecked forward pass into caller-provided buffers. The workspace
    /// must come from [`workspace`](Self::workspace) on this model.
    pub fn forward_ws(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        debug_assert_eq!(x.len(), self.dims[0]);
        ws.acts[0].copy_from_slice(x);
        let n = self.dims.len() - 1;
        for l in 0..n {
            let (rows, cols) = (self.dims[l + 1], self.dims[l]);
            let w = &self.weights[l];
            for r in 0..rows {
                let mut z = self.biases[l][r];
                let wr = &w[r * cols..(r + 1) * cols];
                for (wv, av) in wr.iter().zip(&ws.acts[l]) {
                    z += wv * av;
                }
                ws.zs[l][r] = z;
            }
            let last = l == n - 1;
            for r in 0..rows {
                let z = ws.zs[l][r];
                ws.acts[l + 1][r] = if last { logistic(z) } else { z.max(0.0) };
            }
        }
        ws.acts[n][0]
    }

    /// Forward pass plus input gradient, reusing workspace buffers.
    /// Returns `f(x)`; writes the gradient into `grad`.
    pub fn value_and_input_gradient_ws(&self, x: &[f64], ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.dims[0]);
        let p = self.forward_ws(x, ws);
        let n = self.dims.len() - 1;
        // dp/dz at the output; the clamp is flat outside (P_MIN, 1-P_MIN)
        // but p*(1-p) there is ~1e-15, indistinguishable from the true 0.
        ws.deltas[n - 1][0] = p * (1.0 - p);
        for l in (0..n - 1).rev() {
            let (rows, cols) = (self.dims[l + 2], self.dims[l + 1]);
            let w = &self.weights[l + 1];
            let (lower, upper) = ws.deltas.split_at_mut(l + 1);
            let d_out = &upper[0];
            let d_in = &mut lower[l];
            for c in 0..cols {
                let mut s = 0.0;
                for r in 0..rows {
                    s += w[r * cols + c] * d_out[r];
                }
                d_in[c] = if ws.zs[l][c] > 0.0 { s } else { 0.0 };
            }
        }
        let (rows, cols) = (self.dims[1], self.dims[0]);
        let w = &self.weights[0];
        for c in 0..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += w[r * cols + c] * ws.deltas[0][r];
            }
            grad[c] = s;
        }
        p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightsFile {
    version: u32,
    layer_dims: Vec<usize>,
    hidden_activation: String,
    output_activation: String,
    threshold: f64,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpClassifier {
    /// Writes parameters as versioned JSON.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let file = WeightsFile {
            version: 1,
            layer_dims: self.dims.clone(),
            hidden_activation: "relu".into(),
            output_activation: "logistic".into(),
            threshold: self.threshold,
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Parse(format!("serializing weights: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Reads a weight file, validating version, activations, and shapes.
    /// Error messages name the offending field.
    pub fn load_weights(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: WeightsFile = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("weight file {}: {e}", path.display())))?;
        if file.version != 1 {
            return Err(Error::Parse(format!(
                "field 'version': {} is not supported (expected 1)",
                file.version
            )));
        }
        if file.hidden_activation != "relu" {
            return Err(Error::Parse(format!(
                "field 'hidden_activation': '{}' is not supported (expected 'relu')",
                file.hidden_activation
            )));
        }
        if file.output_activation != "logistic" {
            return Err(Error::Parse(format!(
                "field 'output_activation': '{}' is not supported (expected 'logistic')",
                file.output_activation
            )));
        }
        Self::from_parts(file.layer_dims, file.weights, file.biases, file.threshold).map_err(|e| {
            match e {
                Error::ShapeMismatch(m) => Error::Parse(format!("field 'weights'/'biases': {m}")),
                Error::Config(m) => Error::Parse(format!("field 'layer_dims'/'threshold': {m}")),
                other => other,
            }
        })
    }
}

/// Training hyperparameters for [`train`].
#[derive(Debug, Clone)]
pub struct TrainParams {
    pub hidden_dims: Vec<usize>,
    pub threshold: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            hidden_dims: vec![50, 50],
            threshold: 0.5,
            learning_rate: 0.1,
            epochs: 60,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Fitted model plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpClassifier,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Fits an MLP by mini-batch gradient descent on binary cross-entropy.
/// Deterministic in `params.seed` (initialization and batch order).
pub fn train(train: &Dataset, test: Option<&Dataset>, params: &TrainParams) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Precondition("training dataset is empty".into()));
    }
    if !train.is_normalized() {
        return Err(Error::Precondition(
            "training dataset must be normalized to [0, 1]".into(),
        ));
    }
    if params.learning_rate <= 0.0 || !params.learning_rate.is_finite() {
        return Err(Error::Config(format!(
            "learning rate {} must be finite and positive",
            params.learning_rate
        )));
    }
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    if params.hidden_dims.is_empty() {
        return Err(Error::Config("at least one hidden layer is required".into()));
    }
    let mut dims = vec![train.n_cols()];
    dims.extend_from_slice(&params.hidden_dims);
    dims.push(1);
    let mut model = MlpClassifier::random(dims, params.threshold, params.seed)?;
    let mut ws = model.workspace();
    let n_layers = model.dims.len() - 1;

    let mut grad_w: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut final_loss = f64::NAN;

    for _epoch in 0..params.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                let x = train.row(i);
                let y = train.label(i) as f64;
                let p = model.forward_ws(x, &mut ws);
                epoch_loss += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                // Backprop on pre-activations; logistic + BCE gives p - y.
                ws.deltas[n_layers - 1][0] = p - y;
                for l in (0..n_layers - 1).rev() {
                    let (rows, cols) = (model.dims[l + 2], model.dims[l + 1]);
                    let w = &model.weights[l + 1];
                    let (lower, upper) = ws.deltas.split_at_mut(l + 1);
                    let d_out = &upper[0];
                    let d_in = &mut lower[l];
                    for c in 0..cols {
                        let mut s = 0.0;
                        for r in 0..rows {
                            s += w[r * cols + c] * d_out[r];
                        }
                        d_in[c] = if ws.zs[l][c] > 0.0 { s } else { 0.0 };
                    }
                }
                for l in 0..n_layers {
                    let (rows, cols) = (model.dims[l + 1], model.dims[l]);
                    for r in 0..rows {
                        let d = ws.deltas[l][r];
                        grad_b[l][r] += d;
                        let gw = &mut grad_w[l][r * cols..(r + 1) * cols];
                        for (g, a) in gw.iter_mut().zip(&ws.acts[l]) {
                            *g += d * a;
                        }
                    }
                }
            }
            let step = params.learning_rate / batch.len() as f64;
            for l in 0..n_layers {
                for (w, g) in model.weights[l].iter_mut().zip(&grad_w[l]) {
                    *w -= step * g;
                }
                for (b, g) in model.biases[l].iter_mut().zip(&grad_b[l]) {
                    *b -= step * g;
                }
            }
        }
        final_loss = epoch_loss / train.n_rows() as f64;
    }

    let accuracy = |ds: &Dataset| -> f64 {
        if ds.is_empty() {
            return f64::NAN;
        }
        let mut ws = model.workspace();
        let correct = (0..ds.n_rows())
            .filter(|&i| {
                let p = model.forward_ws(ds.row(i), &mut ws);
                ((p > model.threshold) as u8) == ds.label(i)
            })
            .count();
        correct as f64 / ds.n_rows() as f64
    };
    let train_accuracy = accuracy(train);
    let test_accuracy = test.filter(|d| !d.is_empty()).map(accuracy);
    Ok(TrainOutcome { model, final_loss, train_accuracy, test_accuracy })
}
