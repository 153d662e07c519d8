//! Mode connectivity along a trained quadratic Bezier path.
//!
//! `mc = (L(a) + L(b))/2 - L(curve(t*))` where `t*` minimizes the gap to
//! the endpoint mean; negative values flag a barrier between the modes,
//! positive values a lower-loss region (undertraining).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::Loss;
use crate::train::adam::{AdamConfig, AdamState};

#[derive(Clone, Copy, Debug)]
pub struct ConnectivityConfig {
    /// Adam steps used to train the control point.
    pub train_steps: usize,
    pub lr: f64,
    /// t draws per training step.
    pub t_samples: usize,
    /// Resolution of the final t grid (includes both endpoints).
    pub grid: usize,
    pub seed: u64,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        ConnectivityConfig {
            train_steps: 200,
            lr: 1e-3,
            t_samples: 16,
            grid: 101,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectivityResult {
    pub mc: f64,
    pub t_star: f64,
    pub curve_losses: Vec<f64>,
    pub endpoint_losses: (f64, f64),
}

fn bezier_point(a: &[f64], control: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
    let w0 = (1.0 - t) * (1.0 - t);
    let w1 = 2.0 * t * (1.0 - t);
    let w2 = t * t;
    for i in 0..a.len() {
        out[i] = w0 * a[i] + w1 * control[i] + w2 * b[i];
    }
}

/// `t*` and `mc` from sampled curve losses: `t*` minimizes
/// `|mean_end - L(curve(t))|`, ties broken toward smaller t.
pub(crate) fn mc_from_samples(ts: &[f64], losses: &[f64], mean_end: f64) -> (f64, f64) {
    let mut best = 0usize;
    let mut best_gap = f64::INFINITY;
    for (i, &l) in losses.iter().enumerate() {
        let gap = (mean_end - l).abs();
        if gap < best_gap {
            best_gap = gap;
            best = i;
        }
    }
    (ts[best], mean_end - losses[best])
}

/// Fit the quadratic Bezier (one trainable control point, initialized at
/// the midpoint) minimizing the expected loss over t ~ U[0,1], then
/// evaluate the connectivity gap on a uniform t grid.
pub fn mode_connectivity(
    loss: &dyn Loss,
    theta_a: &[f64],
    theta_b: &[f64],
    cfg: &ConnectivityConfig,
) -> Result<ConnectivityResult> {
    if theta_a.len() != theta_b.len() {
        return Err(Error::Dimension {
            expected: theta_a.len(),
            got: theta_b.len(),
        });
    }
    if cfg.grid < 2 {
        return Err(Error::config("t grid needs at least 2 points"));
    }
    let n = theta_a.len();
    let f_a = loss.value(theta_a)?;
    let f_b = loss.value(theta_b)?;
    if !(f_a.is_finite() && f_b.is_finite()) {
        return Err(Error::NonFinite("endpoint loss".into()));
    }
    let mean_end = 0.5 * (f_a + f_b);

    // train the control point
    let mut control: Vec<f64> = theta_a
        .iter()
        .zip(theta_b)
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        epochs: cfg.train_steps,
        ..Default::default()
    };
    let mut adam = AdamState::new(n);
    let mut point = vec![0.0f64; n];
    let mut grad_accum = vec![0.0f64; n];
    for _ in 0..cfg.train_steps {
        for g in grad_accum.iter_mut() {
            *g = 0.0;
        }
        for _ in 0..cfg.t_samples {
            let t: f64 = rng.gen_range(0.0..1.0);
            bezier_point(theta_a, &control, theta_b, t, &mut point);
            let (f, g) = loss.value_grad(&point)?;
            if !f.is_finite() {
                return Err(Error::non_finite_loss(f, &point));
            }
            // d curve / d control = 2 t (1 - t)
            let w = 2.0 * t * (1.0 - t) / cfg.t_samples as f64;
            for (acc, gi) in grad_accum.iter_mut().zip(&g) {
                *acc += w * gi;
            }
        }
        adam.step(&adam_cfg, &mut control, &grad_accum);
    }

    // evaluate on the final grid
    let mut ts = Vec::with_capacity(cfg.grid);
    let mut losses = Vec::with_capacity(cfg.grid);
    for i in 0..cfg.grid {
        let t = i as f64 / (cfg.grid - 1) as f64;
        bezier_point(theta_a, &control, theta_b, t, &mut point);
        let f = loss.value(&point)?;
        if !f.is_finite() {
            return Err(Error::non_finite_loss(f, &point));
        }
        ts.push(t);
        losses.push(f);
    }
    let (t_star, mc) = mc_from_samples(&ts, &losses, mean_end);
    Ok(ConnectivityResult {
        mc,
        t_star,
        curve_losses: losses,
        endpoint_losses: (f_a, f_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::QuadraticLoss;

    #[test]
    fn fixed_sample_formula() {
        // endpoint mean 2; sampled losses 1.0, 2.5, 3.0 at t = 0, 0.5, 1
        let (t_star, mc) = mc_from_samples(&[0.0, 0.5, 1.0], &[1.0, 2.5, 3.0], 2.0);
        assert_eq!(t_star, 0.5);
        assert_eq!(mc, -0.5);
    }

    #[test]
    fn ties_break_toward_smaller_t() {
        let (t_star, mc) = mc_from_samples(&[0.0, 0.5, 1.0], &[2.0, 3.0, 2.0], 2.0);
        assert_eq!(t_star, 0.0);
        assert_eq!(mc, 0.0);
    }

    #[test]
    fn identical_endpoints_give_zero_mc() {
        let loss = QuadraticLoss::with_diag(vec![2.0, 0.5, 1.0]);
        let theta = vec![0.4, -0.2, 0.9];
        let out = mode_connectivity(&loss, &theta, &theta, &ConnectivityConfig::default()).unwrap();
        assert_eq!(out.mc, 0.0);
        assert_eq!(out.t_star, 0.0);
    }

    #[test]
    fn convex_loss_has_nonnegative_mc() {
        // on a convex loss the fitted curve cannot rise above the chord,
        // so the gap at t* is never negative (no barrier)
        let loss = QuadraticLoss::with_diag(vec![1.0, 3.0, 0.25, 2.0]);
        let a = vec![1.0, 0.5, -1.0, 0.25];
        let b = vec![-0.5, 1.0, 0.75, -1.0];
        let out = mode_connectivity(&loss, &a, &b, &ConnectivityConfig::default()).unwrap();
        assert!(out.mc >= -1e-8, "mc {}", out.mc);
        assert!(out.t_star >= 0.0 && out.t_star <= 1.0);
    }
}
