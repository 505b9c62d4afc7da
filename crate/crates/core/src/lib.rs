//! Simulation, estimation and Monte-Carlo benchmarking for LARCH-family
//! conditional-heteroskedasticity models.
//!
//! A LARCH(∞) process is a weak white noise whose volatility is an affine
//! function of its own past,
//!
//! ```text
//! X_t = ξ_t · (a_0(θ) + Σ_{j≥1} a_j(θ) X_{t−j}),
//! ```
//!
//! with symmetric i.i.d. innovations normalized so that `E|ξ| = 1`. Unlike
//! GARCH, the volatility may come arbitrarily close to zero, which rules out
//! plain Gaussian quasi-maximum likelihood. This crate provides:
//!
//! * [`model`] — the three parametric coefficient families (finite LARCH(p),
//!   GLARCH(p,q), long-memory power law), their analytic gradients and the
//!   second/fourth-moment stationarity domains;
//! * [`noise`] — Gaussian and Student innovations with exact `E|ξ| = 1`
//!   scaling and reproducible, stream-splittable sampling;
//! * [`simulate`] — stationary trajectory generation plus closed-form moment
//!   oracles;
//! * [`estimate`] — the least-absolute-values (LAV) contrast together with
//!   smoothed-QML and weighted-LS competitors, minimized by a multi-start
//!   Nelder–Mead search under box constraints;
//! * [`infer`] — sandwich asymptotic covariance, `σ_ξ²` estimation and
//!   confidence intervals;
//! * [`mc`] — a deterministic, parallel Monte-Carlo harness reporting
//!   per-coordinate RMSE tables.

pub mod error;
pub mod estimate;
pub mod infer;
pub mod mc;
pub mod model;
pub mod noise;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{ContrastKind, EstimateResult, FitOptions};
pub use infer::SandwichCovariance;
pub use mc::{ExperimentConfig, McReport};
pub use model::{CoefficientTable, Family, ModelSpec};
pub use noise::NoiseSpec;
pub use simulate::{SimConfig, Trajectory};
