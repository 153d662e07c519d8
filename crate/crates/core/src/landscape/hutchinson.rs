//! Hutchinson trace estimation with Rademacher probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mlp::HvpOracle;

#[derive(Clone, Copy, Debug)]
pub struct HutchinsonConfig {
    pub max_probes: usize,
    /// Stop when the running mean moves less than this (relatively) over
    /// a window of probes.
    pub rel_tol: f64,
    pub window: usize,
    pub seed: u64,
}

impl Default for HutchinsonConfig {
    fn default() -> Self {
        HutchinsonConfig {
            max_probes: 100,
            rel_tol: 1e-3,
            window: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceEstimate {
    pub value: f64,
    pub probes_used: usize,
}

/// Running mean of `v' H v` over Rademacher probes.
pub fn hessian_trace(h: &dyn HvpOracle, cfg: &HutchinsonConfig) -> Result<TraceEstimate> {
    if cfg.max_probes == 0 {
        return Err(Error::config("max_probes must be at least 1"));
    }
    let dim = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = 0.0f64;
    let mut window_start_mean = f64::INFINITY;
    let mut used = 0usize;
    let mut v = vec![0.0f64; dim];
    for k in 1..=cfg.max_probes {
        for vi in v.iter_mut() {
            *vi = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let hv = h.apply(&v)?;
        let quad: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
        mean += (quad - mean) / k as f64;
        used = k;
        if k % cfg.window == 0 {
            let change = (mean - window_start_mean).abs();
            if change <= cfg.rel_tol * mean.abs().max(1e-12) {
                break;
            }
            window_start_mean = mean;
        }
    }
    Ok(TraceEstimate {
        value: mean,
        probes_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::oracle::DenseOracle;

    #[test]
    fn diagonal_trace_is_exact_after_one_probe() {
        // for diagonal H, v'Hv = sum_i H_ii v_i^2 = trace for any sign vector
        let h = DenseOracle::diagonal(&[3.0, 1.0]);
        let cfg = HutchinsonConfig {
            max_probes: 1,
            ..Default::default()
        };
        let est = hessian_trace(&h, &cfg).unwrap();
        assert_eq!(est.value, 4.0);
        assert_eq!(est.probes_used, 1);
    }

    #[test]
    fn zero_operator_has_zero_trace() {
        let h = DenseOracle::diagonal(&[0.0; 8]);
        let est = hessian_trace(&h, &HutchinsonConfig::default()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn random_symmetric_trace_within_five_percent_averaged_over_seeds() {
        let h = DenseOracle::random_symmetric(50, 4.0, 9);
        let exact = h.exact_trace();
        let mut mean_of_means = 0.0;
        for seed in 0..20u64 {
            let cfg = HutchinsonConfig {
                max_probes: 100,
                rel_tol: 0.0, // use the full probe budget
                window: 10,
                seed,
            };
            mean_of_means += hessian_trace(&h, &cfg).unwrap().value;
        }
        mean_of_means /= 20.0;
        let rel = (mean_of_means - exact).abs() / exact.abs();
        assert!(rel < 0.05, "rel error {rel} (est {mean_of_means}, exact {exact})");
    }
}
