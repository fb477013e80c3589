//! High-dimensional BB84 secret key rates.

use serde::{Deserialize, Serialize};

use crate::crosstalk::{visibility, CrosstalkMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub dimension: usize,
    pub qber: f64,
    /// Asymptotic rate in bits per sifted photon; may be negative.
    pub rate_bits: f64,
}

impl KeyRateResult {
    /// The rate as reported: negative rates read as zero.
    pub fn reported_rate(&self) -> f64 {
        self.rate_bits.max(0.0)
    }
}

/// d-dimensional Shannon entropy `-x log2(x/(d-1)) - (1-x) log2(1-x)`,
/// continuous at both ends: `h(0) = 0`, `h(1) = log2(d-1)`.
pub fn entropy_d(x: f64, d: usize) -> f64 {
    assert!(d >= 2, "entropy_d needs d >= 2");
    let x = x.clamp(0.0, 1.0);
    let first = if x > 0.0 { -x * (x / (d - 1) as f64).log2() } else { 0.0 };
    let second = if x < 1.0 { -(1.0 - x) * (1.0 - x).log2() } else { 0.0 };
    first + second
}

/// `R = log2(d) - 2 h_d(e_b)`.
pub fn secret_key_rate(d: usize, qber: f64) -> KeyRateResult {
    KeyRateResult { dimension: d, qber, rate_bits: (d as f64).log2() - 2.0 * entropy_d(qber, d) }
}

/// `1 - V` of the submatrix on `subset`.
pub fn qber_from_crosstalk(m: &CrosstalkMatrix, subset: &[usize]) -> Result<f64> {
    if subset.len() < 2 {
        return Err(Error::InvalidArgument("a key needs at least 2 modes".into()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() {
        return Err(Error::InvalidArgument("subset indices must be distinct".into()));
    }
    Ok(1.0 - visibility(&m.submatrix(subset)?)?)
}

/// Key rate of the subspace spanned by `subset`.
pub fn subset_key_rate(m: &CrosstalkMatrix, subset: &[usize]) -> Result<KeyRateResult> {
    Ok(secret_key_rate(subset.len(), qber_from_crosstalk(m, subset)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_limits() {
        for d in [2, 3, 30] {
            assert_eq!(entropy_d(0.0, d), 0.0);
            assert!((entropy_d(1.0, d) - ((d - 1) as f64).log2()).abs() < 1e-15);
        }
        assert!((entropy_d(0.5, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_and_rate_values() {
        // frozen from a 30-digit evaluation of the closed form
        assert!((entropy_d(0.032, 30) - 0.359_780_062_824_361_9).abs() < 1e-12);
        assert!((secret_key_rate(4, 0.05).rate_bits - 1.268_709_835_695_972).abs() < 1e-12);
        assert_eq!(secret_key_rate(2, 0.0).rate_bits, 1.0);
    }

    #[test]
    fn qber_examples() {
        let labels: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let id = CrosstalkMatrix::identity(labels.clone());
        assert_eq!(qber_from_crosstalk(&id, &[0, 2, 4]).unwrap(), 0.0);
        let u = CrosstalkMatrix::new(labels, vec![0.2; 25], None).unwrap();
        assert!((qber_from_crosstalk(&u, &[0, 1, 2, 3, 4]).unwrap() - 0.8).abs() < 1e-15);
        assert!(qber_from_crosstalk(&u, &[1]).is_err());
        assert!(qber_from_crosstalk(&u, &[1, 1]).is_err());
        assert!(qber_from_crosstalk(&u, &[1, 7]).is_err());
    }

    #[test]
    fn negative_rate_reported_as_zero() {
        let r = secret_key_rate(2, 0.4);
        assert!(r.rate_bits < 0.0);
        assert_eq!(r.reported_rate(), 0.0);
    }
}
