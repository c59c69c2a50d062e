use std::ops::{Add, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64`, [`Jet2`](super::Jet2) and tape
/// [`Var`](super::Var)s.
///
/// Only the infallible primitives are part of the trait. Division, `ln`,
/// `sqrt` and `powf` can leave their domain and are exposed as checked
/// methods on the concrete types instead.
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// A constant in the same evaluation context as `self`.
    fn lift(&self, value: f64) -> Self;
    fn value(&self) -> f64;
    fn scale(self, k: f64) -> Self;
    fn add_const(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `max(self, c)`; at a tie the constant branch wins.
    fn max_const(self, c: f64) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    #[inline]
    fn lift(&self, value: f64) -> Self {
        value
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn add_const(self, c: f64) -> Self {
        self + c
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
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
    fn max_const(self, c: f64) -> Self {
        if self > c {
            self
        } else {
            c
        }
    }
}

/// A coefficient (network weight) acting on activations of type `S`.
///
/// Plain `f64` weights multiply jets or tape variables without lifting
/// them first; tape weights are themselves variables.
pub trait Coeff<S: Real>: Copy {
    fn times(self, s: S) -> S;
    fn as_real(self, like: &S) -> S;
}

impl<S: Real> Coeff<S> for f64 {
    #[inline]
    fn times(self, s: S) -> S {
        s.scale(self)
    }
    #[inline]
    fn as_real(self, like: &S) -> S {
        like.lift(self)
    }
}
