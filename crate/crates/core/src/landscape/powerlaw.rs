//! Power-law tail fitting of inverse step magnitudes (continuous MLE
//! with KS-optimal lower cutoff).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::trace::TrainingTrace;

#[derive(Clone, Copy, Debug)]
pub struct PlConfig {
    /// Number of post-threshold steps to keep.
    pub tail_len: usize,
    /// Minimum tail points above a candidate cutoff.
    pub min_tail: usize,
}

impl Default for PlConfig {
    fn default() -> Self {
        PlConfig {
            tail_len: 1000,
            min_tail: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlFit {
    pub alpha: f64,
    pub x_min: f64,
    /// Points at or above the chosen cutoff.
    pub n_tail: usize,
    pub ks_distance: f64,
    /// Zero-magnitude steps dropped before fitting.
    pub dropped_zeros: usize,
}

/// Fit the tail exponent of `x = 1 / step_magnitude` over the post
/// threshold portion of a trace.
pub fn pl_exponent(trace: &TrainingTrace, loss_threshold: f64, cfg: &PlConfig) -> Result<PlFit> {
    let steps = trace.steps_below(loss_threshold);
    if steps.len() < cfg.tail_len.min(cfg.min_tail) {
        return Err(Error::Empty(format!(
            "only {} post-threshold steps available",
            steps.len()
        )));
    }
    let tail = &steps[steps.len().saturating_sub(cfg.tail_len)..];
    fit_inverse_magnitudes(tail, cfg)
}

/// Clauset-style continuous power-law fit on `1/magnitude` samples.
pub fn fit_inverse_magnitudes(step_magnitudes: &[f64], cfg: &PlConfig) -> Result<PlFit> {
    let mut dropped = 0usize;
    let mut xs: Vec<f64> = Vec::with_capacity(step_magnitudes.len());
    for &m in step_magnitudes {
        if m > 0.0 && m.is_finite() {
            xs.push(1.0 / m);
        } else {
            dropped += 1;
        }
    }
    if xs.len() < cfg.min_tail {
        return Err(Error::Empty(format!(
            "{} usable step magnitudes after dropping {dropped} zeros; need {}",
            xs.len(),
            cfg.min_tail
        )));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();

    let mut best: Option<PlFit> = None;
    let mut prev_candidate = f64::NAN;
    for i in 0..n {
        let x_min = xs[i];
        if x_min == prev_candidate {
            continue;
        }
        prev_candidate = x_min;
        let tail = &xs[i..];
        let m = tail.len();
        if m < cfg.min_tail {
            break;
        }
        let log_sum: f64 = tail.iter().map(|x| (x / x_min).ln()).sum();
        if log_sum <= 0.0 {
            // all tail values equal: the MLE is degenerate
            continue;
        }
        let alpha = 1.0 + m as f64 / log_sum;
        // KS distance between the empirical tail CDF and the model CDF
        let mut ks: f64 = 0.0;
        for (j, x) in tail.iter().enumerate() {
            let model = 1.0 - (x_min / x).powf(alpha - 1.0);
            let emp_lo = j as f64 / m as f64;
            let emp_hi = (j + 1) as f64 / m as f64;
            ks = ks.max((model - emp_lo).abs()).max((model - emp_hi).abs());
        }
        let fit = PlFit {
            alpha,
            x_min,
            n_tail: m,
            ks_distance: ks,
            dropped_zeros: dropped,
        };
        if best.as_ref().map_or(true, |b| ks < b.ks_distance) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| {
        Error::Numerical("power-law fit degenerate (all step magnitudes equal)".into())
    })
}
