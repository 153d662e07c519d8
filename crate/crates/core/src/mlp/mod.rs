//! Dense tanh multilayer perceptrons with exact input jets, exact
//! parameter gradients, and Hessian-vector product oracles.
//!
//! Evaluation and differentiation are pure functions of `(theta, input)`
//! and safe to call concurrently on shared parameters; only optimizers
//! mutate parameters, and each owns its state.

pub mod checkpoint;
pub mod loss;
pub mod hvp;
pub mod net;
pub mod ops;
pub mod pass;
pub mod scalar;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use hvp::{make_hvp, HvpMode, HvpOracle, LossHvp};
pub use loss::{loss_gradient, Loss, LossExpr, QuadraticLoss};
pub use net::{init_network, Activation, MlpArch, NetworkParameters};
pub use ops::{forward, forward_jet};
pub use pass::{Jet2, JetSpec, MlpTape};
pub use scalar::{Dual, Scalar};
