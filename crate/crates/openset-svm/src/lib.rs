//! A kernel-SVM toolkit for open-set recognition.
//!
//! The core primitive is an SMO solver for the bias-regularized dual with
//! the equality constraint `sum alpha_i y_i = lambda`. A sufficiently large
//! lambda forces the bias term negative, and a negative bias is exactly the
//! condition under which an RBF decision function labels only a bounded
//! region positive. One-vs-all composition then rejects far-away samples as
//! unknown for every class at once.
//!
//! Modules:
//! - [`kernel`]: RBF evaluation and the kernel-row cache.
//! - [`solver`]: the constrained SMO dual solver.
//! - [`binary`]: one binary classifier, lambda escalation, model files.
//! - [`ova`]: one-vs-all composition with unknown rejection.
//! - [`model_selection`]: the four grid-search regimes.
//! - [`metrics`]: open-set accuracy and F-measures.
//! - [`data`]: sparse text I/O, 2D synthetic sets, open-set splits.
//! - [`stats`]: Wilcoxon / Holm / binomial comparison tests.
//! - [`experiment`]: the paired-experiment protocol and its CSV outputs.
//! - [`raster`]: 2D decision-region rendering.

pub mod binary;
pub mod data;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod model_selection;
pub mod ova;
pub mod raster;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
