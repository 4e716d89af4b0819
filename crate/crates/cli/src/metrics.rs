//! Bit-level error metrics.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("bit vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("bit vectors are empty")]
    Empty,
}

/// Fraction of differing bits.
pub fn ber(decided: &[bool], truth: &[bool]) -> Result<f64, MetricsError> {
    if decided.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { left: decided.len(), right: truth.len() });
    }
    if decided.is_empty() {
        return Err(MetricsError::Empty);
    }
    let errors = decided.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / decided.len() as f64)
}

/// Binomial standard error of a BER estimate over `total_bits` bits.
pub fn ber_stderr(ber: f64, total_bits: u64) -> f64 {
    if total_bits == 0 {
        return f64::NAN;
    }
    (ber * (1.0 - ber) / total_bits as f64).sqrt()
}
