//! Componentwise complex-Gaussian message algebra.
//!
//! Every belief exchanged between detector stages is a vector Gaussian with
//! diagonal covariance, stored as a mean vector plus a per-component variance
//! vector. Two rules do all the work: `combine` (product of densities,
//! precision-weighted moments) and `extrinsic` (division, removing a cavity
//! message from a joint belief). Division can produce non-positive precision;
//! the safeguard maps those components to the variance ceiling and counts the
//! event so callers can report it.

use num_complex::Complex64;
use thiserror::Error;

/// Errors from message-algebra operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MessageError {
    #[error("message lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("variance must be positive, got {value} at component {index}")]
    NonPositiveVariance { index: usize, value: f64 },
}

/// Variance floor and ceiling applied by safeguarded operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBounds {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VarianceBounds {
    fn default() -> Self {
        Self { v_min: 1e-12, v_max: 1e12 }
    }
}

impl VarianceBounds {
    pub fn new(v_min: f64, v_max: f64) -> Self {
        assert!(
            v_min > 0.0 && v_min < v_max,
            "bounds must satisfy 0 < v_min < v_max"
        );
        Self { v_min, v_max }
    }

    /// Clamp a variance into `[v_min, v_max]`; non-finite or non-positive
    /// values map to the ceiling.
    pub fn clamp(&self, v: f64) -> f64 {
        if v.is_finite() && v > 0.0 {
            v.clamp(self.v_min, self.v_max)
        } else {
            self.v_max
        }
    }
}

/// A componentwise complex Gaussian belief: mean and per-component variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMessage {
    pub mean: Vec<Complex64>,
    pub var: Vec<f64>,
}

impl GaussianMessage {
    /// Build a message, validating that lengths match and variances are
    /// strictly positive and finite.
    pub fn new(mean: Vec<Complex64>, var: Vec<f64>) -> Result<Self, MessageError> {
        if mean.len() != var.len() {
            return Err(MessageError::LengthMismatch { left: mean.len(), right: var.len() });
        }
        for (index, &value) in var.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(MessageError::NonPositiveVariance { index, value });
            }
        }
        Ok(Self { mean, var })
    }

    /// Zero-mean message with a uniform variance, the standard initializer.
    pub fn flat(len: usize, variance: f64) -> Self {
        Self { mean: vec![Complex64::new(0.0, 0.0); len], var: vec![variance; len] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn check_compatible(&self, other: &Self) -> Result<(), MessageError> {
        if self.len() != other.len() {
            return Err(MessageError::LengthMismatch { left: self.len(), right: other.len() });
        }
        for (index, &value) in self.var.iter().chain(other.var.iter()).enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(MessageError::NonPositiveVariance {
                    index: index % self.len().max(1),
                    value,
                });
            }
        }
        Ok(())
    }

    /// Product of two Gaussian densities (moment form): the combined
    /// precision is the sum of precisions, the combined mean is the
    /// precision-weighted average. The result's variance never exceeds
    /// either input's.
    pub fn combine(&self, other: &Self) -> Result<Self, MessageError> {
        self.check_compatible(other)?;
        let n = self.len();
        let mut mean = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        for i in 0..n {
            let pa = 1.0 / self.var[i];
            let pb = 1.0 / other.var[i];
            let v = 1.0 / (pa + pb);
            mean.push((self.mean[i] * pa + other.mean[i] * pb) * v);
            var.push(v);
        }
        Ok(Self { mean, var })
    }

    /// Extrinsic message: divide `cavity` out of this joint belief.
    ///
    /// Componentwise `1/v3 = 1/v_joint - 1/v_cavity`. Where that precision
    /// difference is non-positive the formula has no valid Gaussian quotient;
    /// the component gets variance `v_max`, the quotient mean if it is
    /// finite, the joint mean otherwise, and `safeguards` is incremented.
    /// All returned variances are clamped into the bounds.
    pub fn extrinsic(
        &self,
        cavity: &Self,
        bounds: VarianceBounds,
        safeguards: &mut u64,
    ) -> Result<Self, MessageError> {
        self.check_compatible(cavity)?;
        let n = self.len();
        let mut mean = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        for i in 0..n {
            let p_joint = 1.0 / self.var[i];
            let p_cavity = 1.0 / cavity.var[i];
            let precision = p_joint - p_cavity;
            let weighted = self.mean[i] * p_joint - cavity.mean[i] * p_cavity;
            if precision > 0.0 {
                mean.push(weighted / precision);
                var.push(bounds.clamp(1.0 / precision));
            } else {
                *safeguards += 1;
                let quotient = weighted / precision;
                if precision < 0.0 && quotient.re.is_finite() && quotient.im.is_finite() {
                    mean.push(quotient);
                } else {
                    mean.push(self.mean[i]);
                }
                var.push(bounds.v_max);
            }
        }
        Ok(Self { mean, var })
    }

    /// Clamp all variances into `[v_min, v_max]`, leaving means untouched.
    /// Non-positive variances map to `v_max`.
    pub fn clip_variance(&self, v_min: f64, v_max: f64) -> Self {
        let bounds = VarianceBounds::new(v_min, v_max);
        Self {
            mean: self.mean.clone(),
            var: self.var.iter().map(|&v| bounds.clamp(v)).collect(),
        }
    }
}
