//! Perturbation distributions with counter-based deterministic sampling.
//!
//! Draw `k` of round `r` is a pure function of `(seed, r, k)`: each sample
//! gets its own ChaCha8 stream keyed by hashing the triple. Samples can be
//! generated in any order or in parallel and always agree, which is what
//! makes whole benchmark sweeps reproducible byte for byte.
//!
//! Frozen dimensions (immutable features) receive exactly 0.0 and consume no
//! randomness; the draw for a sample is laid out over the free dimensions in
//! index order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution family of the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    /// Isotropic zero-mean Gaussian with the given per-dimension variance.
    Gaussian { variance: f64 },
    /// Uniform over the L2 ball of the given radius.
    UniformBall { radius: f64 },
}

/// A perturbation distribution over the feature space: family, dimension,
/// frozen mask, and base seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    kind: NoiseKind,
    dim: usize,
    frozen: Vec<bool>,
    seed: u64,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a well-mixed child seed from a base seed and context words, so
/// batch jobs get independent streams from one user-facing seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(base, |acc, p| splitmix64(acc ^ p))
}

impl NoiseSpec {
    pub fn gaussian(variance: f64, dim: usize) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance {variance} must be finite and positive"
            )));
        }
        Self::new(NoiseKind::Gaussian { variance }, dim)
    }

    pub fn uniform_ball(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!(
                "ball radius {radius} must be finite and positive"
            )));
        }
        Self::new(NoiseKind::UniformBall { radius }, dim)
    }

    fn new(kind: NoiseKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        Ok(NoiseSpec { kind, dim, frozen: vec![false; dim], seed: 0 })
    }

    /// Marks dimensions that receive no perturbation. At least one dimension
    /// must stay free.
    pub fn with_frozen(mut self, frozen: Vec<bool>) -> Result<Self> {
        if frozen.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "frozen mask has {} entries, dimension is {}",
                frozen.len(),
                self.dim
            )));
        }
        if frozen.iter().all(|&f| f) {
            return Err(Error::Config("every dimension is frozen; nothing to perturb".into()));
        }
        self.frozen = frozen;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same distribution under an unrelated stream; evaluation draws use
    /// this so they never overlap the draws seen during optimization.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.seed = seed;
        out
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_free(&self) -> usize {
        self.frozen.iter().filter(|&&f| !f).count()
    }

    /// Per-dimension variance for Gaussian noise, `None` for other families.
    pub fn gaussian_variance(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Gaussian { variance } => Some(variance),
            NoiseKind::UniformBall { .. } => None,
        }
    }

    fn stream(&self, round: u64, k: u64) -> ChaCha8Rng {
        let mut s = splitmix64(self.seed ^ 0x6E6F_6973_655F_7631); // tag: "noise_v1"
        s = splitmix64(s ^ round);
        s = splitmix64(s ^ k);
        ChaCha8Rng::seed_from_u64(s)
    }

    /// Writes draw `k` of round `round` into `out` (length `dim`). Frozen
    /// dimensions are set to 0.0.
    pub fn sample_into(&self, round: u64, k: u64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "output buffer has {} entries, dimension is {}",
                out.len(),
                self.dim
            )));
        }
        let mut rng = self.stream(round, k);
        match self.kind {
            NoiseKind::Gaussian { variance } => {
                let sd = variance.sqrt();
                for (v, &frozen) in out.iter_mut().zip(&self.frozen) {
                    *v = if frozen {
                        0.0
                    } else {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        sd * n
                    };
                }
            }
            NoiseKind::UniformBall { radius } => {
                // Direction from a standard normal, length from U^(1/d_free):
                // uniform over the ball restricted to the free subspace.
                let d_free = self.n_free();
                let mut norm_sq = 0.0;
                for (v, &frozen) in out.iter_mut().zip(&self.frozen) {
                    *v = if frozen {
                        0.0
                    } else {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        norm_sq += n * n;
                        n
                    };
                }
                let norm = norm_sq.sqrt().max(f64::MIN_POSITIVE);
                let u: f64 = rng.gen();
                let scale = radius * u.powf(1.0 / d_free as f64) / norm;
                for (v, &frozen) in out.iter_mut().zip(&self.frozen) {
                    if !frozen {
                        *v *= scale;
                    }
                }
            }
        }
        Ok(())
    }

    /// Convenience allocation-per-call variant of [`sample_into`](Self::sample_into).
    pub fn sample(&self, round: u64, k: u64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(round, k, &mut out)?;
        Ok(out)
    }

    /// All `n` draws of one round.
    pub fn sample_round(&self, round: u64, n: usize) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|k| self.sample(round, k as u64)).collect()
    }
}
