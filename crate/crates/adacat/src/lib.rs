//! Adaptive categorical discretization for 1-D and autoregressive density
//! estimation.
//!
//! The core object is a mixture of `k` uniform components with non-overlapping
//! supports tiling `[0, 1)`, parameterized by a width simplex `w` and a mass
//! simplex `h`. Conditionals of a joint density are modeled autoregressively
//! with per-dimension MLPs predicting unnormalized logits for `w` and `h`.
//! Training maximizes a target-smoothed log-likelihood whose smoothing integral
//! has a closed form in terms of the kernel CDF, with exact analytic gradients.

pub mod armodel;
pub mod datasets;
pub mod distribution;
pub mod error;
pub mod oracle;
pub mod smoothing;
pub mod training;
pub mod verify;

pub use armodel::{ArDensityModel, Checkpoint, FourierConfig, HeadMode};
pub use distribution::{AdaCatParams, BinHit, SampleMode, SimplexVector};
pub use error::AdaCatError;
pub use smoothing::{LogitVector, SmoothedLossGrad, SmoothingKernel};
pub use training::{evaluate, train, EvalResult, TrainConfig, TrainReport};

/// Hard floor on any bin width, applied at construction and after softmax.
pub const EPS_WIDTH: f64 = 1e-8;

/// Tolerance for simplex normalization checks.
pub const SIMPLEX_TOL: f64 = 1e-9;
