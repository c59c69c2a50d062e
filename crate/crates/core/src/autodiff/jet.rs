use std::ops::{Add, Mul, Neg, Sub};

use super::Real;
use crate::error::{Error, Result};

/// Second-order jet: value, first and second derivative with respect to a
/// single scalar seed `h`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub val: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(val: f64, d1: f64, d2: f64) -> Self {
        Jet2 { val, d1, d2 }
    }

    pub const fn constant(val: f64) -> Self {
        Jet2::new(val, 0.0, 0.0)
    }

    /// The independent variable at `h0`.
    pub const fn seed(h0: f64) -> Self {
        Jet2::new(h0, 1.0, 0.0)
    }

    /// Chain rule through a scalar function with derivatives `(f, f', f'')`
    /// evaluated at `self.val`.
    #[inline]
    fn compose(self, f: f64, df: f64, ddf: f64) -> Self {
        Jet2::new(f, df * self.d1, df * self.d2 + ddf * self.d1 * self.d1)
    }

    pub fn checked_div(self, rhs: Jet2) -> Result<Jet2> {
        if rhs.val == 0.0 {
            return Err(Error::domain("div", "divisor jet has zero value"));
        }
        let q = self.val / rhs.val;
        let q1 = (self.d1 - q * rhs.d1) / rhs.val;
        let q2 = (self.d2 - 2.0 * q1 * rhs.d1 - q * rhs.d2) / rhs.val;
        Ok(Jet2::new(q, q1, q2))
    }

    pub fn checked_ln(self) -> Result<Jet2> {
        if self.val <= 0.0 {
            return Err(Error::domain("ln", format!("argument {} is not positive", self.val)));
        }
        let inv = 1.0 / self.val;
        Ok(self.compose(self.val.ln(), inv, -inv * inv))
    }

    pub fn checked_sqrt(self) -> Result<Jet2> {
        if self.val <= 0.0 {
            return Err(Error::domain("sqrt", format!("argument {} is not positive", self.val)));
        }
        let r = self.val.sqrt();
        Ok(self.compose(r, 0.5 / r, -0.25 / (r * self.val)))
    }

    /// `self^p`. Negative bases are rejected unless `p` is an integer; a zero
    /// base requires `p` to be 0, 1 or at least 2 so the derivatives exist.
    pub fn checked_powf(self, p: f64) -> Result<Jet2> {
        let v = self.val;
        let integral = p.fract() == 0.0;
        if (v < 0.0 && !integral) || (v == 0.0 && !(p == 0.0 || p == 1.0 || p >= 2.0)) {
            return Err(Error::domain("powf", format!("{v}^{p} is not twice differentiable")));
        }
        let f = v.powf(p);
        let df = if p == 0.0 { 0.0 } else { p * v.powf(p - 1.0) };
        let ddf = if p == 0.0 || p == 1.0 {
            0.0
        } else {
            p * (p - 1.0) * v.powf(p - 2.0)
        };
        Ok(self.compose(f, df, ddf))
    }
}

/// Evaluate `f` on the seed jet at `h0`, returning `(f(h0), f'(h0), f''(h0))`.
pub fn jet_eval<F>(f: F, h0: f64) -> Result<Jet2>
where
    F: FnOnce(Jet2) -> Result<Jet2>,
{
    f(Jet2::seed(h0))
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.val + rhs.val, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.val - rhs.val, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.val * rhs.val,
            self.d1 * rhs.val + self.val * rhs.d1,
            self.d2 * rhs.val + 2.0 * self.d1 * rhs.d1 + self.val * rhs.d2,
        )
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        Jet2::new(-self.val, -self.d1, -self.d2)
    }
}

impl Real for Jet2 {
    #[inline]
    fn lift(&self, value: f64) -> Self {
        Jet2::constant(value)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Jet2::new(self.val * k, self.d1 * k, self.d2 * k)
    }
    #[inline]
    fn add_const(self, c: f64) -> Self {
        Jet2::new(self.val + c, self.d1, self.d2)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.compose(e, e, e)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        let s = 1.0 - t * t;
        self.compose(t, s, -2.0 * t * s)
    }
    fn sin(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.compose(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.compose(c, -s, -c)
    }
    fn max_const(self, c: f64) -> Self {
        if self.val > c {
            self
        } else {
            Jet2::constant(c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Jet2, b: (f64, f64, f64), tol: f64) -> bool {
        (a.val - b.0).abs() <= tol && (a.d1 - b.1).abs() <= tol && (a.d2 - b.2).abs() <= tol
    }

    #[test]
    fn square_at_zero() {
        let j = jet_eval(|h| Ok(h * h), 0.0).unwrap();
        assert_eq!(j, Jet2::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn sine_at_zero() {
        let j = jet_eval(|h| Ok(h.sin()), 0.0).unwrap();
        assert_eq!(j, Jet2::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn exp_two_h() {
        let j = jet_eval(|h| Ok(h.scale(2.0).exp()), 0.0).unwrap();
        assert_eq!(j, Jet2::new(1.0, 2.0, 4.0));
    }

    #[test]
    fn seed_is_identity() {
        assert_eq!(Jet2::seed(0.7), Jet2::new(0.7, 1.0, 0.0));
    }

    #[test]
    fn domain_errors_name_the_primitive() {
        let zero = Jet2::constant(0.0);
        let err = Jet2::seed(1.0).checked_div(zero).unwrap_err();
        assert!(err.to_string().contains("`div`"));
        let err = jet_eval(|h| h.checked_ln(), -1.0).unwrap_err();
        assert!(err.to_string().contains("`ln`"));
        let err = jet_eval(|h| h.checked_sqrt(), 0.0).unwrap_err();
        assert!(err.to_string().contains("`sqrt`"));
        let err = jet_eval(|h| h.checked_powf(0.5), -2.0).unwrap_err();
        assert!(err.to_string().contains("`powf`"));
    }

    #[test]
    fn quotient_log_sqrt_power() {
        // f(h) = 1/(1+h) at 0: (1, -1, 2)
        let j = jet_eval(|h| Jet2::constant(1.0).checked_div(h.add_const(1.0)), 0.0).unwrap();
        assert!(close(j, (1.0, -1.0, 2.0), 1e-15));
        // ln(h) at 2: (ln 2, 1/2, -1/4)
        let j = jet_eval(|h| h.checked_ln(), 2.0).unwrap();
        assert!(close(j, (2f64.ln(), 0.5, -0.25), 1e-15));
        // sqrt(h) at 4: (2, 1/4, -1/32)
        let j = jet_eval(|h| h.checked_sqrt(), 4.0).unwrap();
        assert!(close(j, (2.0, 0.25, -1.0 / 32.0), 1e-15));
        // h^3 at 2: (8, 12, 12)
        let j = jet_eval(|h| h.checked_powf(3.0), 2.0).unwrap();
        assert!(close(j, (8.0, 12.0, 12.0), 1e-12));
        // h^2 at 0 stays defined
        let j = jet_eval(|h| h.checked_powf(2.0), 0.0).unwrap();
        assert!(close(j, (0.0, 0.0, 2.0), 0.0));
    }

    #[test]
    fn tanh_cos_max() {
        let x: f64 = 0.3;
        let t = x.tanh();
        let j = jet_eval(|h| Ok(h.tanh()), x).unwrap();
        assert!(close(j, (t, 1.0 - t * t, -2.0 * t * (1.0 - t * t)), 1e-15));
        let j = jet_eval(|h| Ok(h.cos()), x).unwrap();
        assert!(close(j, (x.cos(), -x.sin(), -x.cos()), 1e-15));
        let j = jet_eval(|h| Ok(h.max_const(0.0)), x).unwrap();
        assert_eq!(j, Jet2::seed(x));
        let j = jet_eval(|h| Ok(h.max_const(1.0)), x).unwrap();
        assert_eq!(j, Jet2::constant(1.0));
    }

    proptest! {
        #[test]
        fn product_rule_is_exact(
            a in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
            b in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let f = Jet2::new(a.0, a.1, a.2);
            let g = Jet2::new(b.0, b.1, b.2);
            let p = f * g;
            prop_assert_eq!(p.val, a.0 * b.0);
            prop_assert_eq!(p.d1, a.1 * b.0 + a.0 * b.1);
            prop_assert_eq!(p.d2, a.2 * b.0 + 2.0 * a.1 * b.1 + a.0 * b.2);
        }
    }
}
