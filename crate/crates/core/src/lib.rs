//! Training and loss-landscape diagnostics for small scientific ML models.
//!
//! The crate is organized in five layers:
//!
//! * [`mlp`] — dense tanh networks with exact input jets (value, first and
//!   second coordinate derivatives), exact parameter gradients, and
//!   Hessian-vector product oracles.
//! * [`problems`] — benchmark differential equations (1D convection,
//!   reaction, wave, reaction-diffusion, and the damped pendulum), their
//!   residual operators, reference solutions, samplers, and error metrics.
//! * [`train`] — loss assembly (collocation, trajectory, physics-augmented,
//!   augmented Lagrangian) and the optimizer suite (Adam, L-BFGS,
//!   Nyström-preconditioned Newton-CG, curriculum staging).
//! * [`landscape`] — matrix-free curvature estimators (power iteration,
//!   Hutchinson trace, stochastic Lanczos quadrature), mode connectivity,
//!   2D surface slices, and power-law step statistics.
//! * [`regime`] — sweep orchestration over (physical parameter × data
//!   quantity) grids, seed averaging, three-regime classification, and
//!   boundary extraction.

pub mod error;
pub mod landscape;
pub mod mlp;
pub mod problems;
pub mod regime;
pub mod train;

pub use error::{Error, Result};
