//! Scalar-generic bookkeeping: harmonic numbers, robustness bounds and cost
//! ratios. Works for floats and for exact rationals.

use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};

/// Scalar usable by the metrics helpers.
pub trait Scalar: Num + FromPrimitive + Copy + PartialOrd {}

impl<T> Scalar for T where T: Num + FromPrimitive + Copy + PartialOrd {}

fn lift<T: Scalar>(v: u64) -> T {
    T::from_u64(v).expect("value representable in scalar type")
}

/// `H_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic<T: Scalar>(k: usize) -> Result<T> {
    if k < 1 {
        return Err(Error::InvalidParameter("harmonic number needs k >= 1".into()));
    }
    Ok((1..=k as u64).fold(T::zero(), |acc, i| acc + T::one() / lift(i)))
}

/// `2 H_k + 2`, the worst-case cost ratio of a guarded policy.
pub fn robustness_bound<T: Scalar>(k: usize) -> Result<T> {
    let two = lift::<T>(2);
    Ok(two * harmonic::<T>(k)? + two)
}

/// `2 H_k + 6`, the looser bound from the phase-counting argument.
pub fn coarse_robustness_bound<T: Scalar>(k: usize) -> Result<T> {
    Ok(lift::<T>(2) * harmonic::<T>(k)? + lift(6))
}

/// `misses / opt`; a zero-cost optimum only matches a zero-cost run.
pub fn cost_ratio<T: Scalar>(misses: u64, opt: u64) -> T {
    if opt == 0 {
        return if misses == 0 { T::one() } else { lift(misses) };
    }
    lift::<T>(misses) / lift(opt)
}

pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(T::zero(), |a, &b| a + b);
    Some(sum / lift(values.len() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic::<f64>(1).unwrap(), 1.0);
        assert_eq!(harmonic::<f64>(2).unwrap(), 1.5);
        assert_eq!(robustness_bound::<f64>(1).unwrap(), 4.0);
        assert_eq!(robustness_bound::<f64>(2).unwrap(), 5.0);
        assert!(harmonic::<f64>(0).is_err());

        let h10 = harmonic::<Ratio<u64>>(10).unwrap();
        assert_eq!(h10, Ratio::new(7381, 2520));
        let b10 = robustness_bound::<f64>(10).unwrap();
        assert!((b10 - 7.857_936_507_936_508).abs() < 1e-12);
        assert!((b10 - (2.0 * 7381.0 / 2520.0 + 2.0)).abs() < 1e-12);
        assert_eq!(coarse_robustness_bound::<Ratio<u64>>(2).unwrap(), Ratio::from_integer(9));
    }

    #[test]
    fn ratios() {
        assert_eq!(cost_ratio::<f64>(6, 4), 1.5);
        assert_eq!(cost_ratio::<Ratio<u64>>(6, 4), Ratio::new(3, 2));
        assert_eq!(cost_ratio::<f64>(0, 0), 1.0);
        assert_eq!(mean(&[1.0f64, 2.0, 3.0]), Some(2.0));
        assert_eq!(mean::<f64>(&[]), None);
    }
}
