//! Matrix-free Hessian-vector product oracles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::loss::Loss;
use crate::error::{Error, Result};

/// Abstract `v -> H v` context at a frozen parameter point. Every
/// curvature estimator consumes only this interface, so dense synthetic
/// matrices can stand in for real losses in tests.
pub trait HvpOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpMode {
    /// Differentiate the gradient (forward-over-reverse; exact).
    ExactNested,
    /// Central difference of the gradient with `eps = 1e-5 / max(1, |v|)`.
    #[default]
    FdOfGradient,
}

const FD_EPS0: f64 = 1e-5;

/// Hessian-vector products of a loss at fixed `theta`.
pub struct LossHvp {
    loss: Arc<dyn Loss>,
    theta: Vec<f64>,
    mode: HvpMode,
}

/// Build an HVP oracle for `loss` at `theta`.
pub fn make_hvp(loss: Arc<dyn Loss>, theta: Vec<f64>, mode: HvpMode) -> LossHvp {
    LossHvp { loss, theta, mode }
}

impl LossHvp {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

impl HvpOracle for LossHvp {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                got: v.len(),
            });
        }
        match self.mode {
            HvpMode::ExactNested => self.loss.hvp(&self.theta, v),
            HvpMode::FdOfGradient => {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Ok(vec![0.0; v.len()]);
                }
                let eps = FD_EPS0 / norm.max(1.0);
                let plus: Vec<f64> = self
                    .theta
                    .iter()
                    .zip(v)
                    .map(|(&t, &vi)| t + eps * vi)
                    .collect();
                let minus: Vec<f64> = self
                    .theta
                    .iter()
                    .zip(v)
                    .map(|(&t, &vi)| t - eps * vi)
                    .collect();
                let (fp, gp) = self.loss.value_grad(&plus)?;
                if !fp.is_finite() {
                    return Err(Error::non_finite_loss(fp, &plus));
                }
                let (fm, gm) = self.loss.value_grad(&minus)?;
                if !fm.is_finite() {
                    return Err(Error::non_finite_loss(fm, &minus));
                }
                if gp.iter().chain(gm.iter()).any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(
                        "gradient at perturbed parameter state".into(),
                    ));
                }
                Ok(gp
                    .iter()
                    .zip(&gm)
                    .map(|(p, m)| (p - m) / (2.0 * eps))
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::loss::QuadraticLoss;

    #[test]
    fn hvp_of_diagonal_quadratic() {
        let loss = Arc::new(QuadraticLoss::with_diag(vec![3.0, 1.0]));
        for mode in [HvpMode::ExactNested, HvpMode::FdOfGradient] {
            let h = make_hvp(loss.clone(), vec![0.2, 0.4], mode);
            let hv = h.apply(&[1.0, 1.0]).unwrap();
            assert!((hv[0] - 3.0).abs() < 1e-9, "{mode:?}: {hv:?}");
            assert!((hv[1] - 1.0).abs() < 1e-9, "{mode:?}: {hv:?}");
        }
    }

    #[test]
    fn zero_direction_maps_to_zero() {
        let loss = Arc::new(QuadraticLoss::isotropic(3));
        for mode in [HvpMode::ExactNested, HvpMode::FdOfGradient] {
            let h = make_hvp(loss.clone(), vec![1.0, 2.0, 3.0], mode);
            assert_eq!(h.apply(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn fd_hvp_is_exact_on_quadratics() {
        // quadratics have constant Hessians, so the central difference is
        // exact up to rounding
        let diag = vec![2.0, -1.5, 0.25, 4.0];
        let loss = Arc::new(QuadraticLoss::with_diag(diag.clone()));
        let h = make_hvp(loss, vec![0.3, -0.2, 1.0, 0.5], HvpMode::FdOfGradient);
        let v = [0.4, 1.0, -2.0, 0.1];
        let hv = h.apply(&v).unwrap();
        for i in 0..4 {
            assert!((hv[i] - diag[i] * v[i]).abs() < 1e-9);
        }
    }
}
