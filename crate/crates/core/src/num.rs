//! Scalar abstractions for the numeric core.
//!
//! Everything that only needs field arithmetic and ordering (policy
//! evaluation, backward induction, exact dynamic programs) is generic over
//! [`Scalar`], so it can run on `f64`, `f32`, or exact rationals.
//! The iterative solvers additionally need `sqrt`/`powf`/`ln` and work over
//! [`Real`] (floating point only). Concrete aliases live at the crate root.

use num_rational::BigRational;
use num_traits::{Num, Signed};
use std::fmt::Debug;

/// Field arithmetic plus ordering and conversion from primitive constants.
pub trait Scalar: Num + Signed + PartialOrd + Clone + Debug {
    /// Converts an `f64` constant. Panics if the type cannot represent it;
    /// every finite `f64` is representable by all provided impls.
    fn of(x: f64) -> Self;

    fn of_usize(n: usize) -> Self;

    /// `false` only for non-finite floating-point values.
    fn is_finite_s(&self) -> bool;

    fn max_s(self, other: Self) -> Self {
        if self < other {
            other
        } else {
            self
        }
    }

    fn min_s(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_scalar_float {
    ($t:ty) => {
        impl Scalar for $t {
            fn of(x: f64) -> Self {
                x as $t
            }
            fn of_usize(n: usize) -> Self {
                n as $t
            }
            fn is_finite_s(&self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_scalar_float!(f32);
impl_scalar_float!(f64);

impl Scalar for BigRational {
    fn of(x: f64) -> Self {
        BigRational::from_float(x).expect("non-finite f64 constant")
    }
    fn of_usize(n: usize) -> Self {
        BigRational::from_integer(n.into())
    }
    fn is_finite_s(&self) -> bool {
        true
    }
}

/// Floating-point scalar: everything the iterative solvers need.
pub trait Real: Scalar + num_traits::Float + std::fmt::Display + Copy {}

impl Real for f32 {}
impl Real for f64 {}

/// Sup-norm of a vector.
pub fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max_s(x.abs()))
}

/// Sup-norm distance between two vectors of equal length.
pub fn sup_dist<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc.max_s((*x - *y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_a_scalar() {
        let half = BigRational::of(0.5);
        let quarter = half.clone() * half.clone();
        assert_eq!(quarter, BigRational::of(0.25));
        assert!(quarter < half);
        assert!(quarter.is_finite_s());
    }

    #[test]
    fn float_finiteness() {
        assert!(1.0f64.is_finite_s());
        assert!(!f64::NAN.is_finite_s());
        assert!(!f64::INFINITY.is_finite_s());
    }

    #[test]
    fn sup_norms() {
        assert_eq!(sup_norm(&[1.0, -3.0, 2.0]), 3.0);
        assert_eq!(sup_dist(&[1.0, 0.0], &[0.0, 2.0]), 2.0);
    }
}
