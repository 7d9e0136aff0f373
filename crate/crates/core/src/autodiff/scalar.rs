use std::ops::{Add, Mul, Neg, Sub};

/// Real-number arithmetic shared by plain `f64` evaluation and taped [`Var`](super::Var)s.
///
/// Problem formulas (trial forms, residuals, integrands) are written once against this
/// trait and then run either for values only or recorded for reverse-mode gradients.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant living in the same context as `self`.
    fn constant_like(&self, c: f64) -> Self;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn square(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn constant_like(&self, c: f64) -> Self {
        c
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
    fn square(self) -> Self {
        self * self
    }
}
