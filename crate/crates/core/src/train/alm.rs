//! Augmented Lagrangian outer loop: inner full-batch L-BFGS solves
//! between multiplier updates, penalty grown geometrically.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::lbfgs::{lbfgs_run, LbfgsConfig};
use super::losses::AlmState;
use super::trace::{IterObserver, RunStatus, StageResult};
use crate::error::Result;
use crate::mlp::Loss;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlmConfig {
    pub outer_iters: usize,
    pub mu0: f64,
    pub growth: f64,
    pub cap_pow: i32,
    /// Inner epochs between multiplier updates.
    pub update_every: usize,
    pub inner_lr: f64,
    pub inner_history: usize,
}

impl Default for AlmConfig {
    fn default() -> Self {
        AlmConfig {
            outer_iters: 50,
            mu0: 2.0,
            growth: 1.2,
            cap_pow: 50,
            update_every: 2000,
            inner_lr: 1.0,
            inner_history: 100,
        }
    }
}

pub struct AlmOutcome {
    pub result: StageResult,
    pub state: AlmState,
    /// max |c_i| after each outer iteration.
    pub violation_history: Vec<f64>,
}

/// Drive the multiplier method: `make_objective` builds the augmented
/// objective for the current multiplier state, `constraints` evaluates
/// the equality-constraint vector.
pub fn alm_run(
    n_constraints: usize,
    make_objective: &dyn Fn(&AlmState) -> Result<Arc<dyn Loss>>,
    constraints: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    theta0: Vec<f64>,
    cfg: &AlmConfig,
    observer: &mut dyn IterObserver,
) -> Result<AlmOutcome> {
    let mut state = AlmState::new(n_constraints, cfg.mu0, cfg.growth, cfg.cap_pow);
    let mut theta = theta0;
    let mut records = Vec::new();
    let mut status = RunStatus::Completed;
    let mut violation_history = Vec::with_capacity(cfg.outer_iters);
    let inner_cfg = LbfgsConfig {
        lr: cfg.inner_lr,
        epochs: cfg.update_every,
        history: cfg.inner_history,
        ..Default::default()
    };
    let mut iter_offset = 0usize;
    for outer in 0..cfg.outer_iters {
        let objective = make_objective(&state)?;
        let stage = format!("alm{outer}");
        let inner = lbfgs_run(
            objective.as_ref(),
            theta,
            &inner_cfg,
            &stage,
            iter_offset,
            observer,
        )?;
        theta = inner.theta;
        iter_offset = inner.records.last().map(|r| r.iter + 1).unwrap_or(iter_offset);
        records.extend(inner.records);
        if inner.status == RunStatus::Diverged {
            status = RunStatus::Diverged;
            break;
        }
        let c = constraints(&theta)?;
        violation_history.push(c.iter().fold(0.0f64, |a, x| a.max(x.abs())));
        state.update(&c)?;
    }
    Ok(AlmOutcome {
        result: StageResult {
            records,
            status,
            theta,
        },
        state,
        violation_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{LossExpr, Scalar};
    use crate::train::trace::NoopObserver;

    /// min |w|^2 subject to w_0 = 1, via the augmented objective
    /// |w|^2 + lambda (w_0 - 1) + mu/2 (w_0 - 1)^2.
    struct ConstrainedNormSq {
        lambda: f64,
        mu: f64,
        dim: usize,
    }

    impl LossExpr for ConstrainedNormSq {
        fn dim(&self) -> usize {
            self.dim
        }
        fn eval<S: Scalar>(&self, th: &[S], grad: Option<&mut [S]>) -> Result<S> {
            let lam = S::from_f64(self.lambda);
            let mu = S::from_f64(self.mu);
            let c = th[0] - S::one();
            let mut v = lam * c + S::from_f64(0.5) * mu * c * c;
            for x in th {
                v += *x * *x;
            }
            if let Some(g) = grad {
                for (gi, x) in g.iter_mut().zip(th) {
                    *gi += S::from_f64(2.0) * *x;
                }
                g[0] += lam + mu * c;
            }
            Ok(v)
        }
    }

    #[test]
    fn alm_drives_constraint_violation_to_zero_with_true_multiplier() {
        let dim = 4;
        let cfg = AlmConfig {
            outer_iters: 40,
            update_every: 60,
            ..Default::default()
        };
        let out = alm_run(
            1,
            &|state: &AlmState| {
                Ok(Arc::new(ConstrainedNormSq {
                    lambda: state.multipliers[0],
                    mu: state.mu,
                    dim,
                }) as Arc<dyn Loss>)
            },
            &|theta: &[f64]| Ok(vec![theta[0] - 1.0]),
            vec![0.0; dim],
            &cfg,
            &mut NoopObserver,
        )
        .unwrap();
        let final_violation = *out.violation_history.last().unwrap();
        assert!(final_violation < 1e-6, "violation {final_violation}");
        // true multiplier of min |w|^2 s.t. w_0 = 1 is -2
        assert!(
            (out.state.multipliers[0] + 2.0).abs() < 1e-4,
            "multiplier {}",
            out.state.multipliers[0]
        );
        assert!((out.result.theta[0] - 1.0).abs() < 1e-6);
        // violations are non-increasing once the penalty takes hold
        for w in out.violation_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "violation rose: {:?}", out.violation_history);
        }
    }
}
