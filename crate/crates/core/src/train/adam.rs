//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::trace::{l2_norm, IterObserver, RunStatus, StageResult, StepInfo, TraceRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 600,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One bias-corrected update in place; returns the step magnitude.
    pub fn step(&mut self, cfg: &AdamConfig, theta: &mut [f64], grad: &[f64]) -> f64 {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let mut sq = 0.0;
        for i in 0..theta.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let delta = -cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            theta[i] += delta;
            sq += delta * delta;
        }
        sq.sqrt()
    }
}

/// Run Adam against a (possibly stochastic) loss-and-gradient callback.
/// The callback receives the epoch index so callers can re-draw batches.
pub fn adam_run(
    grad_fn: &mut dyn FnMut(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
    theta0: Vec<f64>,
    cfg: &AdamConfig,
    stage: &str,
    iter_offset: usize,
    observer: &mut dyn IterObserver,
) -> Result<StageResult> {
    let mut theta = theta0;
    let dim = theta.len();
    let mut state = AdamState::new(dim);
    let mut records = Vec::with_capacity(cfg.epochs + 1);
    let mut status = RunStatus::Completed;

    let call = |k: usize, th: &[f64], f: &mut dyn FnMut(usize, &[f64]) -> Result<(f64, Vec<f64>)>| {
        match f(k, th) {
            Ok(x) => Ok(x),
            Err(Error::NonFinite(_)) | Err(Error::NonFiniteLoss { .. }) => {
                Ok((f64::INFINITY, vec![0.0; dim]))
            }
            Err(e) => Err(e),
        }
    };

    let (f0, mut grad) = call(0, &theta, grad_fn)?;
    let push = |records: &mut Vec<TraceRecord>,
                    observer: &mut dyn IterObserver,
                    iter: usize,
                    theta: &[f64],
                    loss: f64,
                    gnorm: f64,
                    step: f64| {
        records.push(TraceRecord {
            iter: iter_offset + iter,
            loss,
            grad_norm: gnorm,
            step_magnitude: step,
            stage: stage.to_string(),
        });
        observer.observe(&StepInfo {
            iter: iter_offset + iter,
            theta,
            loss,
            grad_norm: gnorm,
            ls: None,
        });
    };
    push(&mut records, observer, 0, &theta, f0, l2_norm(&grad), 0.0);
    if !f0.is_finite() {
        return Ok(StageResult {
            records,
            status: RunStatus::Diverged,
            theta,
        });
    }

    for k in 1..=cfg.epochs {
        let step = state.step(cfg, &mut theta, &grad);
        let (f, g) = call(k, &theta, grad_fn)?;
        grad = g;
        push(&mut records, observer, k, &theta, f, l2_norm(&grad), step);
        if !f.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
    }
    Ok(StageResult {
        records,
        status,
        theta,
    })
}
