//! Small numeric primitives shared across modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector is empty")]
    EmptyVector,
    #[error("vector contains non-finite entries")]
    NonFinite,
    #[error("series is empty")]
    EmptySeries,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity of two vectors of any (non-zero) length.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, NumericError> {
    if a.len() != b.len() {
        return Err(NumericError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(NumericError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn mean(xs: &[f64]) -> Result<f64, NumericError> {
    if xs.is_empty() {
        return Err(NumericError::EmptySeries);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Population standard deviation and max - min of a series.
pub fn population_std_and_range(xs: &[f64]) -> Result<(f64, f64), NumericError> {
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((var.sqrt(), max - min))
}

/// Round half to even at `decimals` places.
pub fn round_half_even(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round_ties_even() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[0.6, 0.8], &[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), Err(NumericError::DimensionMismatch(1, 2)));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(NumericError::ZeroVector));
    }

    #[test]
    fn std_and_range_examples() {
        assert_eq!(population_std_and_range(&[0.5, 0.5, 0.5]).unwrap(), (0.0, 0.0));
        let (std, range) = population_std_and_range(&[1.0, 2.0, 3.0]).unwrap();
        assert!((std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((std - 0.81650).abs() < 1e-5);
        assert_eq!(range, 2.0);
        assert_eq!(population_std_and_range(&[7.0]).unwrap(), (0.0, 0.0));
        assert_eq!(population_std_and_range(&[]), Err(NumericError::EmptySeries));
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(round_half_even(34.125, 1), 34.1);
        assert_eq!(round_half_even(45.41666, 1), 45.4);
        assert_eq!(round_half_even(0.25, 1), 0.2);
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant((a, b) in vec_pair(), k in 0.01f64..100.0) {
            prop_assume!(l2_norm(&a) > 1e-6 && l2_norm(&b) > 1e-6);
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() <= 1e-12);
            let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
            prop_assert!((ab - cosine(&ka, &b).unwrap()).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
