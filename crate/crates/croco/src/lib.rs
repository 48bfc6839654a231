//! Robust counterfactual explanations for tabular binary classifiers.
//!
//! Given a classifier and an input on the unfavorable side of the decision
//! boundary, the generators in this crate search for a sparse feature change
//! that flips the decision and, for the CROCO method, keeps a certified
//! ceiling on how often random perturbations would undo the flip. The crate
//! also ships the data/model plumbing to run the whole pipeline from CSV
//! files and a benchmark harness that sweeps noise levels and robustness
//! targets.

pub mod bench;
pub mod data;
pub mod error;
pub mod generators;
pub mod nn;
pub mod noise;
pub mod robustness;

pub use error::{Error, Result};
