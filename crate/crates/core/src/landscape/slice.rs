//! 2D log-loss surface slices along the two sharpest directions,
//! filter-normalized per parameter block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::power::{top_eigs, PowerConfig};
use crate::error::{Error, Result};
use crate::mlp::{HvpOracle, Loss, MlpArch};

pub const LOG_OFFSET: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct SliceConfig {
    pub radius: f64,
    /// Odd so the center cell lands exactly on theta.
    pub grid_n: usize,
    pub power: PowerConfig,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            radius: 1.0,
            grid_n: 41,
            power: PowerConfig::default(),
        }
    }
}

/// Log-loss values on the (alpha, beta) lattice, row-major in beta:
/// `values[ib * grid_n + ia]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceSlice {
    pub radius: f64,
    pub grid_n: usize,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// True when eigen directions did not converge and random
    /// orthonormal directions were used instead.
    pub fallback_random: bool,
}

/// Rescale each architecture block (per-layer weights and biases) of
/// `dir` to match the corresponding block norm of `theta`.
pub fn filter_normalize(arch: &MlpArch, theta: &[f64], dir: &mut [f64]) {
    for (off, len) in arch.block_spans() {
        let pb = &theta[off..off + len];
        let db = &mut dir[off..off + len];
        let pn = pb.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dn = db.iter().map(|x| x * x).sum::<f64>().sqrt();
        if dn > 0.0 && pn > 0.0 {
            let scale = pn / dn;
            for d in db.iter_mut() {
                *d *= scale;
            }
        }
    }
}

/// Evaluate `log(L(theta + alpha d1 + beta d2) + 1e-12)` on the slice
/// lattice; `d1`, `d2` are the top curvature directions (deflated power
/// iteration), filter-normalized per block.
pub fn surface_slice(
    loss: &dyn Loss,
    theta: &[f64],
    hvp: &dyn HvpOracle,
    arch: &MlpArch,
    cfg: &SliceConfig,
) -> Result<SurfaceSlice> {
    if cfg.grid_n % 2 == 0 || cfg.grid_n < 3 {
        return Err(Error::config("grid_n must be odd and at least 3"));
    }
    let n = theta.len();
    let pairs = top_eigs(hvp, 2, &cfg.power)?;
    let fallback = pairs.len() < 2 || pairs.iter().any(|p| !p.converged);
    let (mut d1, mut d2) = if fallback {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.power.seed ^ 0x5eed);
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in a.iter_mut() {
            *x /= na;
        }
        let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        for (y, x) in b.iter_mut().zip(&a) {
            *y -= ab * x;
        }
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        for y in b.iter_mut() {
            *y /= nb;
        }
        (a, b)
    } else {
        (pairs[0].vector.clone(), pairs[1].vector.clone())
    };
    filter_normalize(arch, theta, &mut d1);
    filter_normalize(arch, theta, &mut d2);

    let mut values = Vec::with_capacity(cfg.grid_n * cfg.grid_n);
    let mut point = vec![0.0f64; n];
    let half = (cfg.grid_n / 2) as i64;
    for ib in -half..=half {
        let beta = cfg.radius * ib as f64 / half as f64;
        for ia in -half..=half {
            let alpha = cfg.radius * ia as f64 / half as f64;
            for i in 0..n {
                point[i] = theta[i] + alpha * d1[i] + beta * d2[i];
            }
            let f = loss.value(&point)?;
            values.push((f + LOG_OFFSET).ln());
        }
    }
    Ok(SurfaceSlice {
        radius: cfg.radius,
        grid_n: cfg.grid_n,
        values,
        d1,
        d2,
        fallback_random: fallback,
    })
}

impl SurfaceSlice {
    pub fn center(&self) -> f64 {
        self.values[(self.grid_n / 2) * self.grid_n + self.grid_n / 2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::oracle::DenseOracle;
    use crate::mlp::{LossExpr, QuadraticLoss, Scalar};

    #[test]
    fn center_cell_is_log_loss_at_theta() {
        let arch = MlpArch::new(vec![1, 1]).unwrap();
        let loss = QuadraticLoss::with_diag(vec![2.0, 1.0]);
        let theta = vec![0.3, -0.8];
        let hvp = DenseOracle::diagonal(&[2.0, 1.0]);
        let cfg = SliceConfig {
            radius: 0.5,
            grid_n: 5,
            ..Default::default()
        };
        let slice = surface_slice(&loss, &theta, &hvp, &arch, &cfg).unwrap();
        let expect = (crate::mlp::Loss::value(&loss, &theta).unwrap() + LOG_OFFSET).ln();
        assert!((slice.center() - expect).abs() <= 1e-10);
    }

    #[test]
    fn even_loss_gives_symmetric_slice() {
        let arch = MlpArch::new(vec![1, 1]).unwrap();
        let loss = QuadraticLoss::with_diag(vec![1.0, 1.0]);
        let theta = vec![0.0, 0.0];
        let hvp = DenseOracle::diagonal(&[1.0, 1.0]);
        let cfg = SliceConfig {
            radius: 1.0,
            grid_n: 7,
            ..Default::default()
        };
        let s = surface_slice(&loss, &theta, &hvp, &arch, &cfg).unwrap();
        let n = s.grid_n;
        for ib in 0..n {
            for ia in 0..n {
                let a = s.values[ib * n + ia];
                let b = s.values[(n - 1 - ib) * n + (n - 1 - ia)];
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    struct TwoParamLoss;
    impl LossExpr for TwoParamLoss {
        fn dim(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, th: &[S], grad: Option<&mut [S]>) -> crate::error::Result<S> {
            // 1/2 (4 x^2 + y^2): distinct curvatures so directions are stable
            let v = S::from_f64(2.0) * th[0] * th[0] + S::from_f64(0.5) * th[1] * th[1];
            if let Some(g) = grad {
                g[0] += S::from_f64(4.0) * th[0];
                g[1] += th[1];
            }
            Ok(v)
        }
    }

    #[test]
    fn three_by_three_matches_direct_evaluation() {
        let arch = MlpArch::new(vec![1, 1]).unwrap();
        let theta = vec![0.2, -0.4];
        let hvp = DenseOracle::diagonal(&[4.0, 1.0]);
        let cfg = SliceConfig {
            radius: 1.0,
            grid_n: 3,
            ..Default::default()
        };
        let s = surface_slice(&TwoParamLoss, &theta, &hvp, &arch, &cfg).unwrap();
        let mut idx = 0;
        for ib in [-1.0f64, 0.0, 1.0] {
            for ia in [-1.0f64, 0.0, 1.0] {
                let p = [
                    theta[0] + ia * s.d1[0] + ib * s.d2[0],
                    theta[1] + ia * s.d1[1] + ib * s.d2[1],
                ];
                let direct = (crate::mlp::Loss::value(&TwoParamLoss, &p).unwrap() + LOG_OFFSET).ln();
                assert!(
                    (s.values[idx] - direct).abs() <= 1e-12,
                    "cell {idx}: {} vs {direct}",
                    s.values[idx]
                );
                idx += 1;
            }
        }
        assert!(!s.fallback_random);
    }

    #[test]
    fn filter_normalization_matches_block_norms() {
        let arch = MlpArch::new(vec![2, 3, 1]).unwrap();
        let theta: Vec<f64> = (1..=arch.param_count()).map(|i| i as f64 / 7.0).collect();
        let mut dir: Vec<f64> = (0..arch.param_count()).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
        filter_normalize(&arch, &theta, &mut dir);
        for (off, len) in arch.block_spans() {
            let pn = theta[off..off + len].iter().map(|x| x * x).sum::<f64>().sqrt();
            let dn = dir[off..off + len].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((pn - dn).abs() <= 1e-10 * pn.max(1.0));
        }
    }
}
