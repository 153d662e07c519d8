//! Loss assembly and the optimizer suite.
//!
//! One training run is strictly sequential and owns its parameters;
//! distinct runs may execute concurrently with no shared mutable state.

pub mod adam;
pub mod alm;
pub mod lbfgs;
pub mod losses;
pub mod nncg;
pub mod recipe;
pub mod trace;

pub use adam::{adam_run, AdamConfig, AdamState};
pub use alm::{alm_run, AlmConfig, AlmOutcome};
pub use lbfgs::{lbfgs_run, LbfgsConfig};
pub use losses::{
    mean_square_loss, AlmState, NodeLoss, PhysicsAnchor, PinnLoss, PinodeLoss,
};
pub use nncg::{nncg_run, NncgConfig, NystromApprox};
pub use recipe::{
    train, AlmSettings, CurriculumConfig, DiagnosticsConfig, ModelKind, OptimizerConfig, Recipe,
    RunResult, Stage,
};
pub use trace::{
    read_trace_csv, IterObserver, LineSearchEvidence, NoopObserver, RunStatus, StageResult,
    StepInfo, TraceRecord, TrainingTrace,
};
