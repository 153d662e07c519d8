//! Object-safe loss interface used by every optimizer and curvature
//! estimator, plus the generic-scalar hook that gives each concrete loss
//! an exact Hessian-vector product for free.

use super::scalar::{Dual, Scalar};
use crate::error::{Error, Result};

/// A twice-differentiable scalar objective over a flat parameter vector.
pub trait Loss: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> Result<f64>;

    /// Loss value together with the exact gradient.
    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Exact Hessian-vector product at `theta` applied to `v`
    /// (directional derivative of the gradient).
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

/// Losses written once, generically over the scalar type. Instantiated at
/// `f64` they produce values and gradients; instantiated at [`Dual`] with
/// tangent `v` on the parameters, the gradient tangents are exactly `H v`.
pub trait LossExpr: Send + Sync {
    fn dim(&self) -> usize;

    fn eval<S: Scalar>(&self, theta: &[S], grad: Option<&mut [S]>) -> Result<S>;
}

impl<T: LossExpr> Loss for T {
    fn dim(&self) -> usize {
        LossExpr::dim(self)
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.eval::<f64>(theta, None)
    }

    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0f64; theta.len()];
        let value = self.eval::<f64>(theta, Some(&mut grad))?;
        Ok((value, grad))
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != theta.len() {
            return Err(Error::Dimension {
                expected: theta.len(),
                got: v.len(),
            });
        }
        let theta_d: Vec<Dual> = theta
            .iter()
            .zip(v)
            .map(|(&t, &vi)| Dual::new(t, vi))
            .collect();
        let mut grad = vec![Dual::default(); theta.len()];
        self.eval::<Dual>(&theta_d, Some(&mut grad))?;
        Ok(grad.into_iter().map(|g| g.dt).collect())
    }
}

/// Gradient of `loss` at `theta`, erroring out (with the offending
/// parameter state attached) when the loss is non-finite there.
pub fn loss_gradient(loss: &dyn Loss, theta: &[f64]) -> Result<Vec<f64>> {
    let (value, grad) = loss.value_grad(theta)?;
    if !value.is_finite() {
        return Err(Error::non_finite_loss(value, theta));
    }
    Ok(grad)
}

/// `L(theta) = 1/2 theta' diag(d) theta + c' theta`; handy as a test
/// objective with a known constant Hessian.
pub struct QuadraticLoss {
    pub diag: Vec<f64>,
    pub linear: Vec<f64>,
}

impl QuadraticLoss {
    pub fn isotropic(dim: usize) -> Self {
        QuadraticLoss {
            diag: vec![1.0; dim],
            linear: vec![0.0; dim],
        }
    }

    pub fn with_diag(diag: Vec<f64>) -> Self {
        let n = diag.len();
        QuadraticLoss {
            diag,
            linear: vec![0.0; n],
        }
    }
}

impl LossExpr for QuadraticLoss {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn eval<S: Scalar>(&self, theta: &[S], grad: Option<&mut [S]>) -> Result<S> {
        if theta.len() != self.diag.len() {
            return Err(Error::Dimension {
                expected: self.diag.len(),
                got: theta.len(),
            });
        }
        let half = S::from_f64(0.5);
        let mut value = S::zero();
        for i in 0..theta.len() {
            let d = S::from_f64(self.diag[i]);
            let c = S::from_f64(self.linear[i]);
            value += half * d * theta[i] * theta[i] + c * theta[i];
        }
        if let Some(g) = grad {
            for i in 0..theta.len() {
                g[i] = S::from_f64(self.diag[i]) * theta[i] + S::from_f64(self.linear[i]);
            }
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_theta() {
        let loss = QuadraticLoss::isotropic(2);
        let g = loss_gradient(&loss, &[1.0, -2.0]).unwrap();
        assert_eq!(g, vec![1.0, -2.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        struct Constant(usize);
        impl LossExpr for Constant {
            fn dim(&self) -> usize {
                self.0
            }
            fn eval<S: Scalar>(&self, _theta: &[S], grad: Option<&mut [S]>) -> Result<S> {
                if let Some(g) = grad {
                    for gi in g.iter_mut() {
                        *gi = S::zero();
                    }
                }
                Ok(S::from_f64(3.25))
            }
        }
        let g = loss_gradient(&Constant(4), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exact_hvp_of_quadratic() {
        let loss = QuadraticLoss::with_diag(vec![3.0, 1.0]);
        let hv = loss.hvp(&[0.7, -0.3], &[1.0, 1.0]).unwrap();
        assert!((hv[0] - 3.0).abs() < 1e-15);
        assert!((hv[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_loss_carries_parameter_state() {
        struct Bad;
        impl LossExpr for Bad {
            fn dim(&self) -> usize {
                2
            }
            fn eval<S: Scalar>(&self, _theta: &[S], _grad: Option<&mut [S]>) -> Result<S> {
                Ok(S::from_f64(f64::NAN))
            }
        }
        match loss_gradient(&Bad, &[3.0, 4.0]) {
            Err(Error::NonFiniteLoss { theta, param_norm, .. }) => {
                assert_eq!(*theta, vec![3.0, 4.0]);
                assert!((param_norm - 5.0).abs() < 1e-12);
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }
}
