use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Differentiable scalar used by every field, drift and actuation map.
///
/// Implemented for plain `f64`, for [`Jet2`](super::Jet2) (value, gradient,
/// Hessian) and for [`Taylor`](super::Taylor) (truncated multivariate Taylor
/// series). Both derivative carriers are generic over an inner `Scalar`, so
/// `Jet2<Jet2<f64>>` or `Taylor<Jet2<f64>>` are valid scalars too.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
{
    fn constant(value: f64) -> Self;

    /// Innermost real part.
    fn value(&self) -> f64;

    /// True when the number and all of its derivative parts are exactly zero.
    fn is_zero(&self) -> bool;

    fn recip(&self) -> Self;

    fn sin(&self) -> Self;

    fn cos(&self) -> Self;

    fn square(&self) -> Self {
        self.clone() * self
    }

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn is_zero(&self) -> bool {
        *self == 0.0
    }

    #[inline]
    fn recip(&self) -> Self {
        1.0 / self
    }

    #[inline]
    fn sin(&self) -> Self {
        f64::sin(*self)
    }

    #[inline]
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

/// A scalar field over the state, evaluable at any differentiable scalar type.
///
/// Barrier bases `h`, Lyapunov bases `V0` and every chain level are instances.
pub trait ScalarField: Send + Sync {
    fn arity(&self) -> usize;

    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

impl<F: ScalarField> ScalarField for &F {
    fn arity(&self) -> usize {
        (**self).arity()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        (**self).eval(x)
    }
}
