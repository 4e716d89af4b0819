//! State evolution: a scalar recursion predicting the joint detector's
//! per-iteration MSE.
//!
//! In the large-system limit every message register concentrates on a single
//! precision, and the matrix stages act on those precisions only through the
//! eigenvalue spectra of `H^H H` and `C^H C`. The recursion walks the same
//! back/forward schedule as the detector, replacing the denoiser by the MSE
//! of the scalar channel `r = x + w`, computed by two-dimensional
//! Gauss–Hermite quadrature over the noise and an exact sum over the
//! constellation.
//!
//! The spectra can come from one sampled channel pair (what a finite run
//! actually faces) or from deterministic Marchenko–Pastur quantiles.

use num_complex::Complex64;

use crate::constellation::{Constellation, GaussianPrior, Prior};
use crate::linalg::{hermitian_eigenvalues, hermitian_gram, LinalgError};
use crate::messages::VarianceBounds;
use crate::system::Dimensions;
use nalgebra::DMatrix;

/// Eigenvalue spectra of the two hop Gram matrices, ascending and
/// non-negative: `lambda` for `H^H H` (length L), `eta` for `C^H C`
/// (length M).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectra {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Spectra of one channel pair.
pub fn eigen_spectra(
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
) -> Result<Spectra, LinalgError> {
    let mut lambda = hermitian_eigenvalues(&hermitian_gram(h))?;
    let mut eta = hermitian_eigenvalues(&hermitian_gram(c))?;
    for v in lambda.iter_mut().chain(eta.iter_mut()) {
        *v = v.max(0.0);
    }
    Ok(Spectra { lambda, eta })
}

/// How the mixing-stage averages reconcile the `L` nonzero eigenvalues with
/// the `M`-dimensional relay node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectrumAveraging {
    /// Average the forward mixing variance over all `M` relay components,
    /// counting the `M - L` zero modes of `H H^H`. This matches the
    /// dimension of the belief the detector actually averages.
    #[default]
    Padded,
    /// Average over the `L` nonzero eigenvalues only.
    NonzeroOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeOptions {
    pub averaging: SpectrumAveraging,
    pub bounds: VarianceBounds,
}

/// Scalar precisions after one full iteration. Names mirror the detector's
/// registers; `_prec` fields are precisions, `_var` fields variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeIteration {
    /// Belief variance on `y` in the back pass.
    pub y_belief_back_var: f64,
    /// Extrinsic precision on `y` toward the relay node.
    pub y_back_prec: f64,
    /// Belief precision on `t` in the back pass.
    pub t_belief_back_prec: f64,
    /// Extrinsic precision on `t` toward the mixing node.
    pub t_back_prec: f64,
    /// Belief variance on `x` in the back pass.
    pub x_belief_back_var: f64,
    /// Extrinsic precision on `x` toward the prior.
    pub x_back_prec: f64,
    /// Predicted MSE of the denoised estimate this iteration.
    pub mse: f64,
    /// Extrinsic precision on `x` from the prior.
    pub x_fwd_prec: f64,
    /// Belief variance on `t` in the forward pass.
    pub t_belief_fwd_var: f64,
    /// Extrinsic precision on `t` from the mixing node.
    pub t_fwd_prec: f64,
    /// Belief precision on `y` in the forward pass.
    pub y_belief_fwd_prec: f64,
    /// Extrinsic precision on `y` toward the observation node.
    pub y_fwd_prec: f64,
}

/// Full state-evolution trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeTrace {
    pub iterations: Vec<SeIteration>,
    /// Non-positive extrinsic precisions clamped to the floor.
    pub clamp_count: u64,
}

impl SeTrace {
    pub fn mse_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.mse).collect()
    }
}

/// MSE of the posterior-mean estimate over the scalar channel `r = x + w`,
/// `w ~ CN(0, 1/gamma)`.
pub trait ScalarMse {
    fn scalar_mse(&self, gamma: f64) -> f64;
}

/// Default Gauss–Hermite order per real dimension.
pub const DEFAULT_QUAD_POINTS: usize = 63;

impl ScalarMse for Constellation {
    fn scalar_mse(&self, gamma: f64) -> f64 {
        scalar_mse(gamma, self, DEFAULT_QUAD_POINTS)
    }
}

impl ScalarMse for GaussianPrior {
    fn scalar_mse(&self, gamma: f64) -> f64 {
        // conjugate closed form
        let vp = self.variance();
        vp / (1.0 + vp * gamma)
    }
}

/// Nodes and weights of `n`-point Gauss–Hermite quadrature with weight
/// `exp(-t^2)`, by Newton iteration on the Hermite recurrence. Nodes come
/// out ascending.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // initial guesses, then polish with Newton
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // orthonormal Hermite recurrence
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        let w = 2.0 / (pp * pp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    nodes.into_iter().zip(weights).collect()
}

/// Quadrature evaluation of the scalar-channel MSE for a discrete prior:
/// exact sum over the constellation, Gauss–Hermite of order `quad_points`
/// per real noise dimension.
pub fn scalar_mse(gamma: f64, prior: &Constellation, quad_points: usize) -> f64 {
    assert!(gamma > 0.0, "precision must be positive");
    let v = 1.0 / gamma;
    let s = v.sqrt();
    let gh = gauss_hermite(quad_points);
    let mut mean_buf = [Complex64::new(0.0, 0.0)];
    let mut acc = 0.0;
    for (k, &point) in prior.points().iter().enumerate() {
        let pk = prior.probs()[k];
        if pk == 0.0 {
            continue;
        }
        for &(ti, wi) in &gh {
            for &(tj, wj) in &gh {
                let r = point + Complex64::new(s * ti, s * tj);
                let den = prior.denoise(&[r], &[v], 1e-300);
                mean_buf[0] = den.mean[0];
                acc += pk * wi * wj * (point - mean_buf[0]).norm_sqr();
            }
        }
    }
    acc / std::f64::consts::PI
}

/// Run the state-evolution recursion for `iterations` steps.
pub fn se_run<P: ScalarMse + ?Sized>(
    spectra: &Spectra,
    sigma1_sq: f64,
    sigma2_sq: f64,
    prior: &P,
    iterations: usize,
    options: &SeOptions,
) -> SeTrace {
    assert!(!spectra.lambda.is_empty() && !spectra.eta.is_empty(), "spectra must be nonempty");
    let source = spectra.lambda.len() as f64;
    let relay = spectra.eta.len() as f64;
    let s1 = sigma1_sq.max(0.0);
    let s2 = sigma2_sq.max(options.bounds.v_min);
    let prec_floor = 1.0 / options.bounds.v_max;
    let prec_ceil = 1.0 / options.bounds.v_min;
    let mut clamp_count = 0u64;
    let mut clamp = |g: f64| -> f64 {
        if g.is_finite() && g > 0.0 {
            g.clamp(prec_floor, prec_ceil)
        } else {
            clamp_count += 1;
            prec_floor
        }
    };

    let mut y_fwd_prec = 1.0;
    let mut t_fwd_prec = 1.0;
    let mut x_fwd_prec = 1.0;
    let mut trace = SeTrace::default();

    for _ in 0..iterations {
        // back pass
        let y_belief_back_var =
            spectra.eta.iter().map(|&e| 1.0 / (e / s2 + y_fwd_prec)).sum::<f64>() / relay;
        let y_back_prec = clamp(1.0 / y_belief_back_var - y_fwd_prec);
        let t_belief_back_prec = t_fwd_prec + y_back_prec / (1.0 + y_back_prec * s1);
        let t_back_prec = clamp(t_belief_back_prec - t_fwd_prec);
        let x_belief_back_var = spectra
            .lambda
            .iter()
            .map(|&l| 1.0 / (l * t_back_prec + x_fwd_prec))
            .sum::<f64>()
            / source;
        let x_back_prec = clamp(1.0 / x_belief_back_var - x_fwd_prec);

        // forward pass
        let mse = prior.scalar_mse(x_back_prec);
        x_fwd_prec = clamp(1.0 / mse - x_back_prec);
        let t_gain: f64 = spectra
            .lambda
            .iter()
            .map(|&l| l / (l * t_back_prec + x_fwd_prec))
            .sum();
        let t_belief_fwd_var = match options.averaging {
            SpectrumAveraging::Padded => t_gain / relay,
            SpectrumAveraging::NonzeroOnly => t_gain / source,
        };
        t_fwd_prec = clamp(1.0 / t_belief_fwd_var - t_back_prec);
        let y_belief_fwd_prec = y_back_prec + t_fwd_prec / (1.0 + t_fwd_prec * s1);
        y_fwd_prec = clamp(y_belief_fwd_prec - y_back_prec);

        trace.iterations.push(SeIteration {
            y_belief_back_var,
            y_back_prec,
            t_belief_back_prec,
            t_back_prec,
            x_belief_back_var,
            x_back_prec,
            mse,
            x_fwd_prec,
            t_belief_fwd_var,
            t_fwd_prec,
            y_belief_fwd_prec,
            y_fwd_prec,
        });
    }
    trace.clamp_count = clamp_count;
    trace
}

/// Deterministic Marchenko–Pastur quantile spectrum for the Gram matrix
/// `A^H A` of a `rows × cols` matrix with i.i.d. entries of variance
/// `entry_var` (requires `cols <= rows`).
pub fn marchenko_pastur_spectrum(
    count: usize,
    rows: usize,
    cols: usize,
    entry_var: f64,
) -> Vec<f64> {
    assert!(cols <= rows && cols > 0, "spectrum needs cols <= rows");
    assert!(count > 0);
    let ratio = cols as f64 / rows as f64;
    let scale = entry_var * rows as f64;
    let sqrt_c = ratio.sqrt();
    let a = (1.0 - sqrt_c) * (1.0 - sqrt_c);
    let b = (1.0 + sqrt_c) * (1.0 + sqrt_c);

    // integrate the density over theta with x = midpoint + halfspan*cos(theta);
    // the square root in the density becomes halfspan*sin(theta), so the
    // integrand is smooth, including the hard-edge case a = 0
    let grid = 8192usize;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let step = std::f64::consts::PI / grid as f64;
    let density = |theta: f64| -> f64 {
        let sin = theta.sin();
        let x = mid + half * theta.cos();
        let ratio_term = if a < 1e-12 {
            // x = b*(1+cos)/2, sin^2 = (1-cos)(1+cos)
            2.0 * (1.0 - theta.cos()) / b
        } else {
            sin * sin / x
        };
        half * half * ratio_term / (2.0 * std::f64::consts::PI * ratio)
    };
    // cumulative mass of x <= x(theta), i.e. integrated from theta to pi
    let mut cdf = vec![0.0; grid + 1];
    for j in (0..grid).rev() {
        let t0 = j as f64 * step;
        let t1 = (j + 1) as f64 * step;
        cdf[j] = cdf[j + 1] + 0.5 * (density(t0) + density(t1)) * step;
    }
    let total = cdf[0];
    debug_assert!((total - 1.0).abs() < 1e-3, "MP mass {total}");

    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let target = (i as f64 + 0.5) / count as f64 * total;
        // cdf decreases in j; binary search for the bracketing cell
        let mut lo = 0usize;
        let mut hi = grid;
        while hi - lo > 1 {
            let midj = (lo + hi) / 2;
            if cdf[midj] > target {
                lo = midj;
            } else {
                hi = midj;
            }
        }
        let c0 = cdf[lo];
        let c1 = cdf[hi];
        let frac = if (c0 - c1).abs() > 0.0 { (c0 - target) / (c0 - c1) } else { 0.5 };
        let theta = (lo as f64 + frac) * step;
        out.push(scale * (mid + half * theta.cos()).max(0.0));
    }
    out.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    out
}

/// Marchenko–Pastur spectra for both hops under the unit-power channel
/// normalization.
pub fn mp_spectra(dims: Dimensions) -> Spectra {
    Spectra {
        lambda: marchenko_pastur_spectrum(
            dims.source,
            dims.relay,
            dims.source,
            1.0 / dims.source as f64,
        ),
        eta: marchenko_pastur_spectrum(
            dims.relay,
            dims.dest,
            dims.relay,
            1.0 / dims.relay as f64,
        ),
    }
}
