//! Matrix-free loss-landscape diagnostics.
//!
//! Every estimator consumes only the [`HvpOracle`](crate::mlp::HvpOracle)
//! interface, so dense synthetic matrices validate them against direct
//! linear algebra. Estimators are read-only over parameters; each owns a
//! seeded RNG, so diagnostics can run concurrently against one frozen
//! checkpoint.

pub mod connect;
pub mod hutchinson;
pub mod oracle;
pub mod power;
pub mod powerlaw;
pub mod slice;
pub mod slq;

pub use connect::{mode_connectivity, ConnectivityConfig, ConnectivityResult};
pub use hutchinson::{hessian_trace, HutchinsonConfig, TraceEstimate};
pub use oracle::DenseOracle;
pub use power::{power_iterate, top_eigs, EigPair, PowerConfig};
pub use powerlaw::{fit_inverse_magnitudes, pl_exponent, PlConfig, PlFit};
pub use slice::{filter_normalize, surface_slice, SliceConfig, SurfaceSlice};
pub use slq::{negative_mass, slq_density, SlqConfig, SpectralDensity};
