//! Newton-CG with a randomized Nyström preconditioner and Armijo
//! backtracking, run as the final stage of a warm-started pipeline.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::lbfgs::eval_value_grad;
use super::trace::{
    l2_norm, IterObserver, LineSearchEvidence, RunStatus, StageResult, StepInfo, TraceRecord,
};
use crate::error::{Error, Result};
use crate::mlp::{make_hvp, HvpMode, HvpOracle, Loss};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NncgConfig {
    pub epochs: usize,
    /// Sketch rank of the Nyström approximation.
    pub rank: usize,
    /// Initial Armijo trial step.
    pub lr: f64,
    pub cg_max_iters: usize,
    pub cg_tol: f64,
    pub armijo_c: f64,
    pub max_backtracks: usize,
    /// Preconditioner regularization `rho = shift_factor * lambda_hat_max`.
    pub shift_factor: f64,
    pub tol_grad: f64,
    pub seed: u64,
    pub hvp_mode: HvpMode,
}

impl Default for NncgConfig {
    fn default() -> Self {
        NncgConfig {
            epochs: 2000,
            rank: 50,
            lr: 1.0,
            cg_max_iters: 50,
            cg_tol: 1e-8,
            armijo_c: 1e-4,
            max_backtracks: 40,
            shift_factor: 1e-6,
            tol_grad: 1e-9,
            seed: 0,
            hvp_mode: HvpMode::FdOfGradient,
        }
    }
}

/// Rank-`r` randomized Nyström approximation `U diag(eigs) U'` of a
/// symmetric operator, stabilized with a small spectral shift.
pub struct NystromApprox {
    pub basis: DMatrix<f64>,
    pub eigs: Vec<f64>,
}

impl NystromApprox {
    pub fn build(h: &dyn HvpOracle, rank: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let dim = h.dim();
        let r = rank.min(dim).max(1);
        let mut omega = DMatrix::<f64>::zeros(dim, r);
        for j in 0..r {
            for i in 0..dim {
                // Box-Muller standard normal
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                omega[(i, j)] = (-2.0 * u1.ln()).sqrt() * u2.cos();
            }
        }
        // thin QR so the sketch is well conditioned
        let omega = DMatrix::from(omega.qr().q());
        let mut y = DMatrix::<f64>::zeros(dim, r);
        let mut col = vec![0.0f64; dim];
        for j in 0..r {
            for i in 0..dim {
                col[i] = omega[(i, j)];
            }
            let hv = h.apply(&col)?;
            for i in 0..dim {
                y[(i, j)] = hv[i];
            }
        }
        let shift = (dim as f64).sqrt() * f64::EPSILON * y.norm();
        let y_shifted = &y + &omega * shift;
        let core = omega.transpose() * &y_shifted;
        let core_sym = (&core + core.transpose()) * 0.5;
        let mut jitter = 0.0;
        let chol = loop {
            let attempt = Cholesky::new(&core_sym + DMatrix::identity(r, r) * jitter);
            match attempt {
                Some(c) => break c,
                None => {
                    jitter = if jitter == 0.0 { shift.max(1e-14) } else { jitter * 100.0 };
                    if jitter > 1e6 {
                        return Err(Error::Numerical(
                            "Nystrom core factorization failed".into(),
                        ));
                    }
                }
            }
        };
        // B = Y_shifted L^{-T}: solve L B' = Y_shifted'
        let bt = chol
            .l()
            .solve_lower_triangular(&y_shifted.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let b = bt.transpose();
        let svd = b.svd(true, false);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let eigs: Vec<f64> = svd
            .singular_values
            .iter()
            .map(|s| (s * s - shift).max(0.0))
            .collect();
        Ok(NystromApprox { basis: u, eigs })
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigs.first().copied().unwrap_or(0.0)
    }

    /// `U diag(eigs) U' v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let vv = DMatrix::from_column_slice(v.len(), 1, v);
        let mut w = self.basis.transpose() * &vv;
        for (i, s) in w.iter_mut().enumerate() {
            *s *= self.eigs[i];
        }
        let out = &self.basis * w;
        out.column(0).iter().copied().collect()
    }

    /// `(U diag(eigs) U' + rho I)^{-1} v` via the Woodbury identity.
    pub fn precond_apply(&self, rho: f64, v: &[f64]) -> Vec<f64> {
        let vv = DMatrix::from_column_slice(v.len(), 1, v);
        let w = self.basis.transpose() * &vv; // r x 1
        let mut inner = w.clone();
        for (i, s) in inner.iter_mut().enumerate() {
            *s /= self.eigs[i] + rho;
        }
        let low_rank = &self.basis * inner;
        let proj = &self.basis * w;
        let mut out = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            out.push(low_rank[(i, 0)] + (v[i] - proj[(i, 0)]) / rho);
        }
        out
    }
}

/// Preconditioned CG on `H d = -g`; stops on the residual tolerance, the
/// iteration cap, or detected non-positive curvature.
fn pcg_direction(
    h: &dyn HvpOracle,
    nystrom: &NystromApprox,
    rho: f64,
    g: &[f64],
    cfg: &NncgConfig,
) -> Result<Vec<f64>> {
    let n = g.len();
    let mut d = vec![0.0f64; n];
    let mut r: Vec<f64> = g.iter().map(|x| -x).collect();
    let gnorm = l2_norm(g);
    let mut z = nystrom.precond_apply(rho, &r);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..cfg.cg_max_iters {
        let hp = h.apply(&p)?;
        let php: f64 = p.iter().zip(&hp).map(|(a, b)| a * b).sum();
        if php <= 0.0 {
            if d.iter().all(|&x| x == 0.0) {
                d = z;
            }
            break;
        }
        let alpha = rz / php;
        for i in 0..n {
            d[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        if l2_norm(&r) <= cfg.cg_tol * gnorm.max(1e-300) {
            break;
        }
        z = nystrom.precond_apply(rho, &r);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(d)
}

pub fn nncg_run(
    loss: Arc<dyn Loss>,
    theta0: Vec<f64>,
    cfg: &NncgConfig,
    stage: &str,
    iter_offset: usize,
    observer: &mut dyn IterObserver,
) -> Result<StageResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0;
    let mut records = Vec::with_capacity(cfg.epochs + 1);
    let (mut f, mut g) = eval_value_grad(loss.as_ref(), &theta)?;
    let mut gnorm = l2_norm(&g);
    records.push(TraceRecord {
        iter: iter_offset,
        loss: f,
        grad_norm: gnorm,
        step_magnitude: 0.0,
        stage: stage.to_string(),
    });
    observer.observe(&StepInfo {
        iter: iter_offset,
        theta: &theta,
        loss: f,
        grad_norm: gnorm,
        ls: None,
    });
    if !f.is_finite() {
        return Ok(StageResult {
            records,
            status: RunStatus::Diverged,
            theta,
        });
    }

    let mut status = RunStatus::Completed;
    for k in 1..=cfg.epochs {
        if gnorm <= cfg.tol_grad {
            status = RunStatus::GradTolerance;
            break;
        }
        let oracle = make_hvp(loss.clone(), theta.clone(), cfg.hvp_mode);
        let nystrom = NystromApprox::build(&oracle, cfg.rank, &mut rng)?;
        let rho = (cfg.shift_factor * nystrom.lambda_max()).max(1e-12);
        let mut d = pcg_direction(&oracle, &nystrom, rho, &g, cfg)?;
        let mut gtd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(gtd < 0.0) {
            // fall back to steepest descent
            d = g.iter().map(|x| -x).collect();
            gtd = -gnorm * gnorm;
        }
        // Armijo backtracking with halving
        let mut t = cfg.lr;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let trial: Vec<f64> = theta.iter().zip(&d).map(|(x, di)| x + t * di).collect();
            let f_trial = match loss.value(&trial) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) | Err(Error::NonFiniteLoss { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if f_trial.is_finite() && f_trial <= f + cfg.armijo_c * t * gtd {
                accepted = Some((t, trial, f_trial));
                break;
            }
            t *= 0.5;
        }
        let Some((t, new_theta, _)) = accepted else {
            status = RunStatus::LineSearchFailed;
            break;
        };
        let step_mag = t * l2_norm(&d);
        let f_prev = f;
        theta = new_theta;
        let (f_new, g_new) = eval_value_grad(loss.as_ref(), &theta)?;
        f = f_new;
        g = g_new;
        gnorm = l2_norm(&g);
        let dir_deriv_new: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        records.push(TraceRecord {
            iter: iter_offset + k,
            loss: f,
            grad_norm: gnorm,
            step_magnitude: step_mag,
            stage: stage.to_string(),
        });
        observer.observe(&StepInfo {
            iter: iter_offset + k,
            theta: &theta,
            loss: f,
            grad_norm: gnorm,
            ls: Some(LineSearchEvidence {
                f_prev,
                dir_deriv_prev: gtd,
                step: t,
                f_new: f,
                dir_deriv_new,
            }),
        });
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
