//! Stochastic Lanczos quadrature estimate of the Hessian eigenvalue
//! density.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::HvpOracle;

#[derive(Clone, Copy, Debug)]
pub struct SlqConfig {
    /// Lanczos steps per probe (quadrature order).
    pub steps: usize,
    pub probes: usize,
    pub seed: u64,
    /// Gaussian smoothing width as a fraction of the spectral range.
    pub sigma_rel: f64,
    /// Linear region of the symmetric-log axis used for plotting.
    pub symlog_threshold: f64,
}

impl Default for SlqConfig {
    fn default() -> Self {
        SlqConfig {
            steps: 64,
            probes: 8,
            seed: 0,
            sigma_rel: 0.02,
            symlog_threshold: 1e-2,
        }
    }
}

/// Probe-averaged quadrature nodes and weights approximating the
/// normalized eigenvalue density.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kernel_sigma: f64,
    pub symlog_threshold: f64,
}

impl SpectralDensity {
    /// Fraction of spectral mass at negative eigenvalues.
    pub fn negative_mass(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(n, _)| **n < 0.0)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn spectral_range(&self) -> (f64, f64) {
        let lo = self.nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Gaussian-smoothed density sampled at `xs`.
    pub fn smoothed(&self, xs: &[f64]) -> Vec<f64> {
        let sigma = self.kernel_sigma.max(1e-300);
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        xs.iter()
            .map(|&x| {
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(&n, &w)| {
                        let z = (x - n) / sigma;
                        w * norm * (-0.5 * z * z).exp()
                    })
                    .sum()
            })
            .collect()
    }
}

/// Fraction of spectral mass below zero.
pub fn negative_mass(density: &SpectralDensity) -> f64 {
    density.negative_mass()
}

/// Run `probes` independent Lanczos recursions (full reorthogonalization)
/// and average their Gauss-quadrature rules.
pub fn slq_density(h: &dyn HvpOracle, cfg: &SlqConfig) -> Result<SpectralDensity> {
    let dim = h.dim();
    if cfg.steps == 0 || cfg.probes == 0 {
        return Err(Error::config("SLQ needs steps >= 1 and probes >= 1"));
    }
    let m = cfg.steps.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let probe_w = 1.0 / cfg.probes as f64;
    for _ in 0..cfg.probes {
        let mut v: Vec<f64> = (0..dim)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let inv = 1.0 / (dim as f64).sqrt();
        for vi in v.iter_mut() {
            *vi *= inv;
        }
        let (alphas, betas) = lanczos(h, v, m)?;
        let k = alphas.len();
        // Gauss quadrature from the tridiagonal eigendecomposition
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        for j in 0..k {
            nodes.push(eig.eigenvalues[j]);
            let first = eig.eigenvectors[(0, j)];
            weights.push(probe_w * first * first);
        }
    }
    let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kernel_sigma = cfg.sigma_rel * (hi - lo).max(1e-12);
    Ok(SpectralDensity {
        nodes,
        weights,
        kernel_sigma,
        symlog_threshold: cfg.symlog_threshold,
    })
}

/// Lanczos recursion with full reorthogonalization; truncates cleanly on
/// breakdown (invariant subspace found).
fn lanczos(h: &dyn HvpOracle, v0: Vec<f64>, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = v0.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m.saturating_sub(1));
    let mut v = v0;
    let norm0 = (v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    for vi in v.iter_mut() {
        *vi /= norm0;
    }
    basis.push(v.clone());
    let mut w = h.apply(&v)?;
    let mut alpha: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
    for i in 0..dim {
        w[i] -= alpha * v[i];
    }
    alphas.push(alpha);
    for _step in 1..m {
        // full reorthogonalization
        for b in &basis {
            let c: f64 = w.iter().zip(b).map(|(a, x)| a * x).sum();
            for i in 0..dim {
                w[i] -= c * b[i];
            }
        }
        let beta = (w.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if beta <= 1e-12 {
            break;
        }
        let v_next: Vec<f64> = w.iter().map(|x| x / beta).collect();
        betas.push(beta);
        w = h.apply(&v_next)?;
        alpha = w.iter().zip(&v_next).map(|(a, b)| a * b).sum();
        for i in 0..dim {
            w[i] -= alpha * v_next[i];
        }
        basis.push(v_next);
        alphas.push(alpha);
    }
    Ok((alphas, betas))
}
