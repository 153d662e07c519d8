//! Scalar abstraction so the network passes run on plain `f64` or on dual
//! numbers. Instantiating the gradient computation with [`Dual`] tangents
//! yields exact Hessian-vector products (forward-over-reverse).

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Clone
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
{
    fn from_f64(x: f64) -> Self;
    /// Primal (value) part.
    fn val(self) -> f64;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    #[inline]
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    #[inline]
    fn is_finite_val(self) -> bool {
        self.val().is_finite()
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// First-order dual number: value plus a single directional tangent.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub dt: f64,
}

impl Dual {
    #[inline]
    pub fn new(re: f64, dt: f64) -> Self {
        Dual { re, dt }
    }

    #[inline]
    pub fn constant(re: f64) -> Self {
        Dual { re, dt: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.re + rhs.re, self.dt + rhs.dt)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.re - rhs.re, self.dt - rhs.dt)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.re * rhs.re, self.re * rhs.dt + self.dt * rhs.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.re;
        Dual::new(self.re * inv, (self.dt - self.re * inv * rhs.dt) * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.dt)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Dual) {
        self.re += rhs.re;
        self.dt += rhs.dt;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Dual) {
        self.re -= rhs.re;
        self.dt -= rhs.dt;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, rhs: Dual) {
        *self = *self * rhs;
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn val(self) -> f64 {
        self.re
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, (1.0 - t * t) * self.dt)
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.dt)
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.re.sin() * self.dt)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::new(2.0, 1.0);
        let y = x * x * x; // d/dx x^3 = 3x^2
        assert!((y.re - 8.0).abs() < 1e-15);
        assert!((y.dt - 12.0).abs() < 1e-15);
    }

    #[test]
    fn dual_quotient_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = Dual::constant(1.0) / x; // d/dx 1/x = -1/x^2
        assert!((y.re - 1.0 / 3.0).abs() < 1e-15);
        assert!((y.dt + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn dual_tanh_chain() {
        let x = Dual::new(0.5, 2.0);
        let y = x.tanh();
        let t = 0.5f64.tanh();
        assert!((y.re - t).abs() < 1e-15);
        assert!((y.dt - 2.0 * (1.0 - t * t)).abs() < 1e-15);
    }
}
