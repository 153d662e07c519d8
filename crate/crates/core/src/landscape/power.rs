//! Power iteration with deflation for the leading Hessian eigenpairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mlp::HvpOracle;

#[derive(Clone, Copy, Debug)]
pub struct PowerConfig {
    pub max_iters: usize,
    /// Relative Rayleigh-quotient change that counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= c * bi;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        for vi in v.iter_mut() {
            *vi /= n;
        }
    }
    n
}

/// One deflated power iteration starting from `v0`; returns the Rayleigh
/// quotient, unit eigenvector estimate, and whether it converged.
pub fn power_iterate(
    h: &dyn HvpOracle,
    v0: Vec<f64>,
    deflate: &[Vec<f64>],
    max_iters: usize,
    tol: f64,
) -> Result<EigPair> {
    let mut v = v0;
    orthogonalize(&mut v, deflate);
    if normalize(&mut v) == 0.0 {
        return Err(Error::Numerical("degenerate start vector".into()));
    }
    let mut lambda = 0.0f64;
    let mut converged = false;
    for _ in 0..max_iters {
        let mut hv = h.apply(&v)?;
        orthogonalize(&mut hv, deflate);
        let rayleigh = dot(&v, &hv);
        let hv_norm = normalize(&mut hv);
        if hv_norm == 0.0 {
            // v is (numerically) in the kernel of the deflated operator
            lambda = 0.0;
            converged = true;
            break;
        }
        let delta = (rayleigh - lambda).abs();
        lambda = rayleigh;
        v = hv;
        if delta <= tol * lambda.abs().max(1e-12) {
            converged = true;
            break;
        }
    }
    Ok(EigPair {
        value: lambda,
        vector: v,
        converged,
    })
}

/// Top-`k` eigenpairs by |eigenvalue|, via power iteration with deflation
/// against the previously found vectors. Non-converged estimates are
/// returned flagged rather than dropped.
pub fn top_eigs(h: &dyn HvpOracle, k: usize, cfg: &PowerConfig) -> Result<Vec<EigPair>> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let dim = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut found: Vec<EigPair> = Vec::with_capacity(k);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k.min(dim) {
        let v0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pair = power_iterate(h, v0, &basis, cfg.max_iters, cfg.tol)?;
        basis.push(pair.vector.clone());
        found.push(pair);
    }
    found.sort_by(|a, b| b.value.abs().partial_cmp(&a.value.abs()).unwrap());
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::oracle::DenseOracle;

    #[test]
    fn diagonal_top_eigenvalue() {
        let h = DenseOracle::diagonal(&[3.0, 1.0]);
        let pairs = top_eigs(&h, 1, &PowerConfig::default()).unwrap();
        assert!((pairs[0].value - 3.0).abs() < 1e-6);
        assert!(
            (pairs[0].vector[0].abs() - 1.0).abs() < 1e-5,
            "eigvec {:?}",
            pairs[0].vector
        );
        assert!(pairs[0].converged);
    }

    #[test]
    fn identity_returns_unit_eigenvalues() {
        let h = DenseOracle::diagonal(&[1.0; 6]);
        let pairs = top_eigs(&h, 3, &PowerConfig::default()).unwrap();
        for p in pairs {
            assert!((p.value - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn top_three_match_dense_eigensolver() {
        let h = DenseOracle::random_symmetric(20, 0.0, 42);
        let mut exact = h.exact_eigenvalues();
        exact.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        let cfg = PowerConfig {
            max_iters: 5000,
            tol: 1e-12,
            seed: 3,
        };
        let pairs = top_eigs(&h, 3, &cfg).unwrap();
        for (p, e) in pairs.iter().zip(&exact) {
            assert!(
                (p.value - e).abs() <= 1e-5 * e.abs(),
                "estimated {} vs exact {e}",
                p.value
            );
        }
    }

    #[test]
    fn negative_dominant_eigenvalue_is_signed() {
        let h = DenseOracle::diagonal(&[-5.0, 2.0, 1.0]);
        let pairs = top_eigs(&h, 2, &PowerConfig::default()).unwrap();
        assert!((pairs[0].value + 5.0).abs() < 1e-6);
        assert!((pairs[1].value - 2.0).abs() < 1e-5);
    }
}
