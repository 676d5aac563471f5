//! Vector and sample arithmetic that every metric builds on.

use crate::error::{Error, Result};

/// Cosine of the angle between two dense vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty vectors".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::DegenerateVector("zero-norm input".into()));
    }
    if !(norm_a.is_finite() && norm_b.is_finite() && dot.is_finite()) {
        return Err(Error::InvalidInput("non-finite vector entries".into()));
    }
    // rounding can push |cos| a hair past 1
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Mean squared deviation from the mean, divisor `n`.
pub fn population_variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("variance of an empty sample".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

pub fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_unit_cosine() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_vectors() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_cosine() {
        // 32 / (sqrt(14) * sqrt(77))
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.974632).abs() < 1e-6);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(population_variance(&[0.7]).unwrap(), 0.0);
        assert_eq!(population_variance(&[0.0, 1.0]).unwrap(), 0.25);
        // direct arithmetic: ((a-b)/2)^2
        let (a, b) = (0.866833, 0.32328147);
        let expected = ((a - b) / 2.0f64).powi(2);
        let got = population_variance(&[a, b]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.0738621).abs() < 1e-7);
        assert!(population_variance(&[]).is_err());
    }
}
