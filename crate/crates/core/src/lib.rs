//! Convergence rate control (CRC) for active semi-supervised learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense ReLU networks with exact per-sample Jacobians.
//! - [`ntk`]: empirical NTK (Gram) matrices and a symmetric eigensolver.
//! - [`pool`] and [`acquisition`]: labeled/unlabeled pools, batch CRC and baselines.
//! - [`training`]: full-batch gradient descent, Π-model and mean teacher, with
//!   per-step instrumentation of the loss recursion.
//! - [`harness`]: datasets, experiment configs, the acquisition loop and run records.
//! - [`diagnostics`]: kernel-flow dynamics, spectrum studies and rank correlation.
//!
//! Data-parallel loops (per-sample Jacobians, candidate-group scoring, seed sweeps)
//! run on rayon when the `parallel` feature is enabled and fall back to plain
//! iteration otherwise. Results are identical in both modes.

pub mod acquisition;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod ntk;
pub mod par;
pub mod pool;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use nn::{JacobianScope, NetworkSpec, ParamVector};
pub use ntk::{GramMatrix, Reduction, Spectrum};
pub use pool::{LabeledSet, Pool};
