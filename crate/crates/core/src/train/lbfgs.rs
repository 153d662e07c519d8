//! Limited-memory BFGS with a strong-Wolfe bracketing/zoom line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::trace::{
    l2_norm, IterObserver, LineSearchEvidence, RunStatus, StageResult, StepInfo, TraceRecord,
};
use crate::error::{Error, Result};
use crate::mlp::Loss;

/// Evaluate, mapping non-finite failures to an infinite loss so the line
/// search backs off instead of aborting (divergence is data).
pub(crate) fn eval_value_grad(loss: &dyn Loss, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    match loss.value_grad(theta) {
        Ok(x) => Ok(x),
        Err(Error::NonFinite(_)) | Err(Error::NonFiniteLoss { .. }) => {
            Ok((f64::INFINITY, vec![0.0; theta.len()]))
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Scale on the line-search trial step (1.0 = standard).
    pub lr: f64,
    pub epochs: usize,
    /// Number of (s, y) pairs kept.
    pub history: usize,
    pub tol_grad: f64,
    pub tol_change: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_ls: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            lr: 1.0,
            epochs: 2000,
            history: 100,
            tol_grad: 1e-7,
            tol_change: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_ls: 25,
        }
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: approximate `-H^{-1} g` from the stored pairs.
fn two_loop(grad: &[f64], pairs: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let alpha = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (p, alpha) in pairs.iter().zip(alphas.into_iter().rev()) {
        let beta = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

struct LinePoint {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

/// Cubic minimizer of a function known at two points with derivatives,
/// clamped into the (sorted) bracket.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt() * (x2 - x1).signum();
        let min_pos = x2 - (x2 - x1) * (g2 + d2 - d1) / (g2 - g1 + 2.0 * d2);
        if min_pos.is_finite() {
            return min_pos.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

enum LineSearchOutcome {
    Accepted(LinePoint),
    Failed,
}

/// Strong-Wolfe line search (bracketing phase plus zoom with cubic
/// interpolation). `g0d` must be negative.
fn strong_wolfe(
    loss: &dyn Loss,
    theta: &[f64],
    dir: &[f64],
    f0: f64,
    g0d: f64,
    t_init: f64,
    cfg: &LbfgsConfig,
) -> Result<LineSearchOutcome> {
    let eval = |t: f64| -> Result<LinePoint> {
        let trial: Vec<f64> = theta.iter().zip(dir).map(|(x, d)| x + t * d).collect();
        let (f, g) = eval_value_grad(loss, &trial)?;
        let gtd = dot(&g, dir);
        Ok(LinePoint { t, f, g, gtd })
    };
    let wolfe = |p: &LinePoint| {
        p.f <= f0 + cfg.c1 * p.t * g0d && p.gtd.abs() <= cfg.c2 * g0d.abs() && p.f.is_finite()
    };

    // bracketing
    let mut prev = LinePoint {
        t: 0.0,
        f: f0,
        g: Vec::new(),
        gtd: g0d,
    };
    let mut t = t_init;
    let mut bracket: Option<(LinePoint, LinePoint)> = None;
    for i in 0..cfg.max_ls {
        let cur = eval(t)?;
        if !cur.f.is_finite() || cur.f > f0 + cfg.c1 * t * g0d || (i > 0 && cur.f >= prev.f) {
            bracket = Some((prev, cur));
            break;
        }
        if wolfe(&cur) {
            return Ok(LineSearchOutcome::Accepted(cur));
        }
        if cur.gtd >= 0.0 {
            bracket = Some((cur, prev));
            break;
        }
        let next_t = t * 2.0;
        prev = cur;
        t = next_t;
    }
    let (mut lo, mut hi) = match bracket {
        Some(b) => b,
        None => return Ok(LineSearchOutcome::Failed),
    };

    // zoom: lo satisfies Armijo with the lowest f seen; hi brackets it
    for _ in 0..cfg.max_ls {
        let span = (hi.t - lo.t).abs();
        if span < 1e-16 * (1.0 + lo.t.abs()) {
            break;
        }
        let mut tj = cubic_interpolate(lo.t, lo.f, lo.gtd, hi.t, hi.f, hi.gtd);
        // keep strictly inside the bracket so the zoom always shrinks
        let (bl, bh) = if lo.t < hi.t { (lo.t, hi.t) } else { (hi.t, lo.t) };
        let inset = 0.05 * (bh - bl);
        if !tj.is_finite() || tj < bl + inset || tj > bh - inset {
            tj = 0.5 * (bl + bh);
        }
        let cur = eval(tj)?;
        if !cur.f.is_finite() || cur.f > f0 + cfg.c1 * tj * g0d || cur.f >= lo.f {
            hi = cur;
        } else {
            if wolfe(&cur) {
                return Ok(LineSearchOutcome::Accepted(cur));
            }
            if cur.gtd * (hi.t - lo.t) >= 0.0 {
                hi = LinePoint {
                    t: lo.t,
                    f: lo.f,
                    g: std::mem::take(&mut lo.g),
                    gtd: lo.gtd,
                };
            }
            lo = cur;
        }
    }
    // accept the best Armijo point found if it at least decreases
    if !lo.g.is_empty() && lo.f < f0 && lo.f.is_finite() {
        return Ok(LineSearchOutcome::Accepted(lo));
    }
    Ok(LineSearchOutcome::Failed)
}

/// Full-batch L-BFGS run. Terminates on gradient tolerance, loss-change
/// tolerance, line-search failure (recorded, mirroring premature
/// termination in practice), divergence, or the epoch budget.
pub fn lbfgs_run(
    loss: &dyn Loss,
    theta0: Vec<f64>,
    cfg: &LbfgsConfig,
    stage: &str,
    iter_offset: usize,
    observer: &mut dyn IterObserver,
) -> Result<StageResult> {
    let mut theta = theta0;
    let mut records = Vec::with_capacity(cfg.epochs + 1);
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(cfg.history);

    let (mut f, mut g) = eval_value_grad(loss, &theta)?;
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
        let mut dir = two_loop(&g, &pairs);
        let mut g0d = dot(&g, &dir);
        if !(g0d < 0.0) {
            pairs.clear();
            dir = g.iter().map(|x| -x).collect();
            g0d = -gnorm * gnorm;
            if !(g0d < 0.0) {
                status = RunStatus::GradTolerance;
                break;
            }
        }
        let t_init = if pairs.is_empty() {
            let g1: f64 = g.iter().map(|x| x.abs()).sum();
            cfg.lr * (1.0 / g1.max(1e-12)).min(1.0)
        } else {
            cfg.lr
        };
        let accepted = match strong_wolfe(loss, &theta, &dir, f, g0d, t_init, cfg)? {
            LineSearchOutcome::Accepted(p) => p,
            LineSearchOutcome::Failed => {
                status = RunStatus::LineSearchFailed;
                break;
            }
        };
        let t = accepted.t;
        let mut s = dir;
        for si in s.iter_mut() {
            *si *= t;
        }
        let step_mag = l2_norm(&s);
        let y: Vec<f64> = accepted.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * step_mag * l2_norm(&y) {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            let rho = 1.0 / sy;
            pairs.push_back(Pair { s: s.clone(), y, rho });
        }
        for (x, si) in theta.iter_mut().zip(&s) {
            *x += si;
        }
        let f_prev = f;
        f = accepted.f;
        g = accepted.g;
        gnorm = l2_norm(&g);
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
                dir_deriv_prev: g0d,
                step: t,
                f_new: f,
                dir_deriv_new: accepted.gtd,
            }),
        });
        if !f.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
        if (f_prev - f).abs() < cfg.tol_change {
            status = RunStatus::ChangeTolerance;
            break;
        }
    }
    Ok(StageResult {
        records,
        status,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result as CResult;
    use crate::mlp::{LossExpr, QuadraticLoss, Scalar};
    use crate::train::trace::NoopObserver;

    #[test]
    fn isotropic_quadratic_converges_in_three_iterations() {
        let loss = QuadraticLoss::isotropic(2);
        let cfg = LbfgsConfig {
            epochs: 10,
            ..Default::default()
        };
        let out = lbfgs_run(&loss, vec![3.0, 4.0], &cfg, "lbfgs", 0, &mut NoopObserver).unwrap();
        let solved_at = out
            .records
            .iter()
            .position(|r| r.grad_norm < 1e-10)
            .expect("converged");
        assert!(solved_at <= 3, "took {solved_at} iterations: {:?}", out.records);
        assert!(l2_norm(&out.theta) < 1e-10);
    }

    struct Rosenbrock;

    impl LossExpr for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, th: &[S], grad: Option<&mut [S]>) -> CResult<S> {
            let (a, b) = (S::from_f64(1.0), S::from_f64(100.0));
            let (x, y) = (th[0], th[1]);
            let v = (a - x) * (a - x) + b * (y - x * x) * (y - x * x);
            if let Some(g) = grad {
                let two = S::from_f64(2.0);
                let four = S::from_f64(4.0);
                g[0] += -two * (a - x) - four * b * (y - x * x) * x;
                g[1] += two * b * (y - x * x);
            }
            Ok(v)
        }
    }

    #[test]
    fn rosenbrock_reaches_tight_tolerance() {
        let cfg = LbfgsConfig {
            epochs: 200,
            tol_grad: 0.0,
            tol_change: 0.0,
            ..Default::default()
        };
        let out = lbfgs_run(&Rosenbrock, vec![-1.2, 1.0], &cfg, "lbfgs", 0, &mut NoopObserver)
            .unwrap();
        let best = out.records.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-8, "best loss {best} after {} iters", out.records.len());
        assert!((out.theta[0] - 1.0).abs() < 1e-3);
    }

    struct WolfeChecker {
        cfg: LbfgsConfig,
        violations: usize,
        accepted: usize,
    }

    impl IterObserver for WolfeChecker {
        fn observe(&mut self, info: &StepInfo<'_>) {
            if let Some(ls) = info.ls {
                self.accepted += 1;
                let armijo =
                    ls.f_new <= ls.f_prev + self.cfg.c1 * ls.step * ls.dir_deriv_prev + 1e-12;
                let curvature = ls.dir_deriv_new.abs() <= self.cfg.c2 * ls.dir_deriv_prev.abs() + 1e-12;
                if !(armijo && curvature) {
                    self.violations += 1;
                }
            }
        }
    }

    #[test]
    fn accepted_steps_satisfy_strong_wolfe() {
        let cfg = LbfgsConfig {
            epochs: 60,
            tol_grad: 0.0,
            tol_change: 0.0,
            ..Default::default()
        };
        let mut checker = WolfeChecker {
            cfg,
            violations: 0,
            accepted: 0,
        };
        lbfgs_run(&Rosenbrock, vec![-1.2, 1.0], &cfg, "lbfgs", 0, &mut checker).unwrap();
        assert!(checker.accepted > 10);
        assert_eq!(checker.violations, 0);
    }

    #[test]
    fn loss_never_increases_across_accepted_iterations() {
        let cfg = LbfgsConfig {
            epochs: 100,
            ..Default::default()
        };
        let out =
            lbfgs_run(&Rosenbrock, vec![-1.2, 1.0], &cfg, "lbfgs", 0, &mut NoopObserver).unwrap();
        for w in out.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
    }
}
