//! Symbol priors and their posterior-mean denoisers.
//!
//! A [`Constellation`] is a discrete prior over complex points with Gray bit
//! labels; its denoiser computes the componentwise posterior mean/variance of
//! a symbol observed through additive complex Gaussian noise. A
//! [`GaussianPrior`] gives the conjugate closed form instead, which turns the
//! whole detection chain into a linear-Gaussian model with an exactly
//! computable posterior — the backbone of the oracle tests.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstellationError {
    #[error("probabilities must sum to 1, got {sum}")]
    ProbabilityNotNormalized { sum: f64 },
    #[error("average symbol energy must be 1, got {energy}")]
    NotUnitEnergy { energy: f64 },
    #[error("point count {points} is not 2^bits for any integer bits")]
    NotPowerOfTwo { points: usize },
    #[error("bit labels must be distinct values below 2^bits")]
    BadBitLabels,
    #[error("points, probabilities, and labels must have equal lengths")]
    LengthMismatch,
}

/// Output of a posterior-mean denoiser.
#[derive(Debug, Clone)]
pub struct Denoised {
    pub mean: Vec<Complex64>,
    pub var: Vec<f64>,
    /// Components where every posterior weight underflowed and the
    /// nearest-point fallback was used.
    pub fallbacks: u64,
}

/// A prior over transmitted symbols with a componentwise posterior-mean
/// denoiser for the scalar additive-Gaussian channel.
pub trait Prior {
    /// Posterior mean and variance of each component given a noisy value
    /// `mean[i]` with noise variance `var[i]`. Output variances are floored
    /// at `v_floor`.
    fn denoise(&self, mean: &[Complex64], var: &[f64], v_floor: f64) -> Denoised;

    /// Average prior symbol energy E|x|^2.
    fn mean_energy(&self) -> f64;
}

/// Discrete unit-energy symbol prior with Gray-coded bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    probs: Vec<f64>,
    bits_per_symbol: usize,
    bit_map: Vec<u32>,
}

impl Constellation {
    pub fn new(
        points: Vec<Complex64>,
        probs: Vec<f64>,
        bit_map: Vec<u32>,
    ) -> Result<Self, ConstellationError> {
        if points.len() != probs.len() || points.len() != bit_map.len() {
            return Err(ConstellationError::LengthMismatch);
        }
        let k = points.len();
        if k == 0 || !k.is_power_of_two() {
            return Err(ConstellationError::NotPowerOfTwo { points: k });
        }
        let bits_per_symbol = k.trailing_zeros() as usize;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ConstellationError::ProbabilityNotNormalized { sum });
        }
        let energy: f64 =
            points.iter().zip(&probs).map(|(p, &w)| w * p.norm_sqr()).sum();
        if (energy - 1.0).abs() > 1e-12 {
            return Err(ConstellationError::NotUnitEnergy { energy });
        }
        let mut seen = vec![false; k];
        for &label in &bit_map {
            let l = label as usize;
            if l >= k || seen[l] {
                return Err(ConstellationError::BadBitLabels);
            }
            seen[l] = true;
        }
        Ok(Self { points, probs, bits_per_symbol, bit_map })
    }

    /// Gray-mapped QPSK: four equiprobable points `(±1 ± j)/√2`. The first
    /// label bit selects the real sign, the second the imaginary sign.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let points = vec![
            Complex64::new(a, a),
            Complex64::new(a, -a),
            Complex64::new(-a, a),
            Complex64::new(-a, -a),
        ];
        Self::new(points, vec![0.25; 4], vec![0b00, 0b01, 0b10, 0b11])
            .expect("QPSK construction is valid")
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Bits of the point at `index`, most significant first.
    pub fn bits_of(&self, index: usize) -> Vec<bool> {
        let label = self.bit_map[index];
        (0..self.bits_per_symbol).rev().map(|b| (label >> b) & 1 == 1).collect()
    }

    /// Index of the nearest constellation point, ties broken by lowest index.
    pub fn nearest(&self, value: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (value - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Slice each estimate to the nearest point and read off its bits.
    pub fn hard_decision(&self, x_hat: &[Complex64]) -> (Vec<usize>, Vec<bool>) {
        let mut indices = Vec::with_capacity(x_hat.len());
        let mut bits = Vec::with_capacity(x_hat.len() * self.bits_per_symbol);
        for &v in x_hat {
            let idx = self.nearest(v);
            indices.push(idx);
            bits.extend(self.bits_of(idx));
        }
        (indices, bits)
    }
}

impl Prior for Constellation {
    fn denoise(&self, mean: &[Complex64], var: &[f64], v_floor: f64) -> Denoised {
        assert_eq!(mean.len(), var.len(), "mean/variance lengths differ");
        let energy = self.mean_energy();
        let mut out_mean = Vec::with_capacity(mean.len());
        let mut out_var = Vec::with_capacity(mean.len());
        let mut fallbacks = 0;
        let mut exponents = vec![0.0; self.points.len()];
        for (&m, &v) in mean.iter().zip(var) {
            debug_assert!(v > 0.0, "denoiser needs positive noise variance");
            // log weights, shifted by the max before exponentiation so the
            // dominant point never underflows
            let mut max_e = f64::NEG_INFINITY;
            for (k, p) in self.points.iter().enumerate() {
                let e = self.probs[k].ln() - (m - p).norm_sqr() / v;
                exponents[k] = e;
                if e > max_e {
                    max_e = e;
                }
            }
            let mut norm = 0.0;
            let mut acc = Complex64::new(0.0, 0.0);
            let mut second = 0.0;
            if max_e.is_finite() {
                for (k, p) in self.points.iter().enumerate() {
                    let w = (exponents[k] - max_e).exp();
                    norm += w;
                    acc += p * w;
                    second += p.norm_sqr() * w;
                }
            }
            if norm > 0.0 && norm.is_finite() {
                let post_mean = acc / norm;
                let post_var = (second / norm - post_mean.norm_sqr()).clamp(v_floor, energy);
                out_mean.push(post_mean);
                out_var.push(post_var);
            } else {
                fallbacks += 1;
                out_mean.push(self.points[self.nearest(m)]);
                out_var.push(v_floor);
            }
        }
        Denoised { mean: out_mean, var: out_var, fallbacks }
    }

    fn mean_energy(&self) -> f64 {
        self.points.iter().zip(&self.probs).map(|(p, &w)| w * p.norm_sqr()).sum()
    }
}

/// Zero-mean circular complex Gaussian prior, one variance for all
/// components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    variance: f64,
}

impl GaussianPrior {
    pub fn new(variance: f64) -> Self {
        assert!(variance > 0.0, "prior variance must be positive");
        Self { variance }
    }

    /// Unit-variance prior, matching the unit-energy constellations.
    pub fn unit() -> Self {
        Self::new(1.0)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

impl Prior for GaussianPrior {
    fn denoise(&self, mean: &[Complex64], var: &[f64], v_floor: f64) -> Denoised {
        assert_eq!(mean.len(), var.len(), "mean/variance lengths differ");
        let vp = self.variance;
        let out_mean = mean
            .iter()
            .zip(var)
            .map(|(&m, &v)| m * (vp / (vp + v)))
            .collect();
        let out_var = var.iter().map(|&v| (vp * v / (vp + v)).max(v_floor)).collect();
        Denoised { mean: out_mean, var: out_var, fallbacks: 0 }
    }

    fn mean_energy(&self) -> f64 {
        self.variance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qpsk_definition() {
        let q = Constellation::qpsk();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert!(q.points().iter().any(|p| (p - c(a, a)).norm() < 1e-15));
        assert_eq!(q.probs(), &[0.25; 4]);
        assert!((q.mean_energy() - 1.0).abs() < 1e-15);
        assert_eq!(q.bits_per_symbol(), 2);
    }

    #[test]
    fn qpsk_gray_labels_differ_by_one_bit_between_adjacent_quadrants() {
        let q = Constellation::qpsk();
        // points sharing a sign axis must differ in exactly one bit
        for i in 0..4 {
            for j in 0..4 {
                let pi = q.points()[i];
                let pj = q.points()[j];
                let same_re = (pi.re - pj.re).abs() < 1e-12;
                let same_im = (pi.im - pj.im).abs() < 1e-12;
                if same_re ^ same_im {
                    let differing = q
                        .bits_of(i)
                        .iter()
                        .zip(q.bits_of(j).iter())
                        .filter(|(a, b)| a != b)
                        .count();
                    assert_eq!(differing, 1);
                }
            }
        }
    }

    #[test]
    fn denoise_symmetry_returns_prior() {
        let q = Constellation::qpsk();
        let out = q.denoise(&[c(0.0, 0.0)], &[2.0], 1e-12);
        assert!(out.mean[0].norm() < 1e-15);
        assert!((out.var[0] - 1.0).abs() < 1e-12);
        assert_eq!(out.fallbacks, 0);
    }

    #[test]
    fn denoise_dominant_point_at_small_noise() {
        let q = Constellation::qpsk();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let out = q.denoise(&[c(10.0, 10.0)], &[0.01], 1e-12);
        assert!((out.mean[0] - c(a, a)).norm() < 1e-9);
        assert!(out.var[0] < 1e-9);
    }

    #[test]
    fn denoise_matches_direct_weighted_sum() {
        // independent four-term oracle, plain arithmetic without the
        // log-domain shift
        let q = Constellation::qpsk();
        let m = c(0.3, 0.1);
        let v = 0.5;
        let mut norm = 0.0;
        let mut mean = c(0.0, 0.0);
        let mut second = 0.0;
        for (k, p) in q.points().iter().enumerate() {
            let w = q.probs()[k] * (-(m - p).norm_sqr() / v).exp();
            norm += w;
            mean += p * w;
            second += p.norm_sqr() * w;
        }
        mean /= norm;
        let var = second / norm - mean.norm_sqr();

        let out = q.denoise(&[m], &[v], 1e-12);
        assert!((out.mean[0] - mean).norm() < 1e-12);
        assert!((out.var[0] - var).abs() < 1e-12);
    }

    #[test]
    fn denoise_rotation_equivariance() {
        let q = Constellation::qpsk();
        let j = c(0.0, 1.0);
        let m = c(0.4, -0.7);
        let v = 0.8;
        let base = q.denoise(&[m], &[v], 1e-12);
        let rot = q.denoise(&[j * m], &[v], 1e-12);
        assert!((rot.mean[0] - j * base.mean[0]).norm() < 1e-12);
        assert!((rot.var[0] - base.var[0]).abs() < 1e-12);
    }

    #[test]
    fn hard_decision_exact_points_and_ties() {
        let q = Constellation::qpsk();
        let pts: Vec<Complex64> = q.points().to_vec();
        let (idx, _) = q.hard_decision(&pts);
        assert_eq!(idx, vec![0, 1, 2, 3]);
        // the origin is equidistant from all four points: lowest index wins
        let (idx, _) = q.hard_decision(&[c(0.0, 0.0)]);
        assert_eq!(idx, vec![0]);
        let (idx, _) = q.hard_decision(&[c(0.9, 0.8)]);
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn hard_decision_consistent_with_sharp_denoiser() {
        let q = Constellation::qpsk();
        let m = c(0.2, -0.5);
        let den = q.denoise(&[m], &[1e-6], 1e-12);
        let (from_denoised, _) = q.hard_decision(&den.mean);
        let (direct, _) = q.hard_decision(&[m]);
        assert_eq!(from_denoised, direct);
    }

    #[test]
    fn gaussian_prior_denoiser() {
        let g = GaussianPrior::unit();
        let out = g.denoise(&[c(2.0, 0.0)], &[1.0], 1e-15);
        assert!((out.mean[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((out.var[0] - 0.5).abs() < 1e-15);
        // near-perfect observation passes through
        let sharp = g.denoise(&[c(2.0, 0.0)], &[1e-12], 1e-15);
        assert!((sharp.mean[0] - c(2.0, 0.0)).norm() < 1e-9);
        assert!(sharp.var[0] < 1e-10);
        // uninformative observation returns the prior
        let flat = g.denoise(&[c(2.0, 0.0)], &[1e12], 1e-15);
        assert!(flat.mean[0].norm() < 1e-9);
        assert!((flat.var[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn denoise_variance_bounded_by_prior_energy() {
        let q = Constellation::qpsk();
        for i in 0..50 {
            let m = c(0.1 * i as f64 - 2.5, 0.07 * i as f64 - 1.0);
            let v = 10f64.powf(i as f64 / 10.0 - 3.0);
            let out = q.denoise(&[m], &[v], 1e-12);
            assert!(out.var[0] > 0.0 && out.var[0] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let pts = vec![c(a, a), c(a, -a), c(-a, a), c(-a, -a)];
        assert!(matches!(
            Constellation::new(pts.clone(), vec![0.3, 0.3, 0.3, 0.3], vec![0, 1, 2, 3]),
            Err(ConstellationError::ProbabilityNotNormalized { .. })
        ));
        assert!(matches!(
            Constellation::new(pts.clone(), vec![0.25; 4], vec![0, 1, 2, 2]),
            Err(ConstellationError::BadBitLabels)
        ));
        let scaled: Vec<Complex64> = pts.iter().map(|p| p * 2.0).collect();
        assert!(matches!(
            Constellation::new(scaled, vec![0.25; 4], vec![0, 1, 2, 3]),
            Err(ConstellationError::NotUnitEnergy { .. })
        ));
    }
}
