//! Reference detectors: per-hop LS/LMMSE processing and the single-hop EP
//! detector.
//!
//! Three comparison schemes bracket the joint detector. `LMMSE+LS` inverts
//! the second hop by least squares and runs an LMMSE estimate on the first
//! with the exact colored LS-error covariance. `Single-LMMSE` collapses both
//! hops into `z = CHx + (Cw + n)` and whitens the compound noise to its
//! average power. `EP+LS` keeps the LS front end but replaces the first-hop
//! LMMSE with the iterative single-hop EP loop, which is also the exact
//! degenerate form of the joint detector when the first hop is removed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::constellation::Prior;
use crate::detector::{
    DetectorFailure, DetectorOptions, DetectorResult, FailureKind, IterationSnapshot,
    posterior_mse,
};
use crate::linalg::{
    hermitian_gram, hermitian_outer, weighted_adjoint_apply, weighted_gram, HpdFactor,
    LinalgError,
};
use crate::messages::GaussianMessage;

/// The comparison detectors, exhaustively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    LmmsePlusLs,
    SingleLmmse,
    EpPlusLs,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineFailure {
    #[error("second-hop channel is numerically rank deficient")]
    RankDeficient(#[source] LinalgError),
    #[error(transparent)]
    Solve(#[from] LinalgError),
}

/// Least-squares inversion of the second hop: `ŷ = (C^H C)^{-1} C^H z`.
///
/// Also returns `diag((C^H C)^{-1})`, the LS error covariance diagonal up to
/// the `σ2²` factor, which the caller supplies.
pub fn ls_second_hop(
    z: &DVector<Complex64>,
    c: &DMatrix<Complex64>,
) -> Result<(DVector<Complex64>, Vec<f64>), BaselineFailure> {
    assert!(z.len() >= c.ncols(), "LS needs at least as many rows as columns");
    let gram = hermitian_gram(c);
    let factor = HpdFactor::new(gram).map_err(BaselineFailure::RankDeficient)?;
    let y = factor.solve(&(c.adjoint() * z));
    let diag = factor.inverse_diag();
    if !y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(BaselineFailure::RankDeficient(LinalgError::Singular {
            size: c.ncols(),
        }));
    }
    Ok((y, diag))
}

/// Options for the LMMSE+LS baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct LmmseLsOptions {
    /// Replace the exact colored LS-error covariance `σ2² (C^H C)^{-1}` by
    /// its average diagonal times the identity.
    pub whiten_error: bool,
}

/// LS on the second hop, then LMMSE on `ŷ = Hx + (w + e)` with unit prior
/// covariance: `x̂ = H^H (H H^H + Σ)^{-1} ŷ`, where `Σ = σ1² I + σ2² (C^H C)^{-1}`.
pub fn lmmse_plus_ls(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
) -> Result<DVector<Complex64>, BaselineFailure> {
    lmmse_plus_ls_with(z, h, c, sigma1_sq, sigma2_sq, LmmseLsOptions::default())
}

pub fn lmmse_plus_ls_with(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    options: LmmseLsOptions,
) -> Result<DVector<Complex64>, BaselineFailure> {
    let relay = h.nrows();
    let (y_ls, gram_inv_diag) = ls_second_hop(z, c)?;
    let mut a = hermitian_outer(h);
    if options.whiten_error {
        let avg = gram_inv_diag.iter().sum::<f64>() / relay as f64;
        let shift = Complex64::new(sigma1_sq + sigma2_sq * avg, 0.0);
        for i in 0..relay {
            a[(i, i)] += shift;
        }
    } else {
        let gram = hermitian_gram(c);
        let inv = HpdFactor::new(gram).map_err(BaselineFailure::RankDeficient)?.inverse();
        a += inv * Complex64::new(sigma2_sq, 0.0);
        for i in 0..relay {
            a[(i, i)] += Complex64::new(sigma1_sq, 0.0);
        }
    }
    let factor = HpdFactor::new(a)?;
    Ok(h.adjoint() * factor.solve(&y_ls))
}

/// Average per-component power of the compound noise `Cw + n`.
pub fn compound_noise_power(c: &DMatrix<Complex64>, sigma1_sq: f64, sigma2_sq: f64) -> f64 {
    let fro_sq: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    sigma1_sq * fro_sq / c.nrows() as f64 + sigma2_sq
}

/// One LMMSE estimate over the compound model `z = CHx + (Cw + n)`, treating
/// the colored noise as white at its average power:
/// `x̂ = G^H (G G^H + σ_eq² I)^{-1} z` with `G = CH`.
pub fn single_lmmse(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
) -> Result<DVector<Complex64>, BaselineFailure> {
    let g = c * h;
    let sigma_eq = compound_noise_power(c, sigma1_sq, sigma2_sq);
    let dest = g.nrows();
    let mut a = hermitian_outer(&g);
    for i in 0..dest {
        a[(i, i)] += Complex64::new(sigma_eq.max(1e-15), 0.0);
    }
    let factor = HpdFactor::new(a)?;
    Ok(g.adjoint() * factor.solve(z))
}

/// Per-component observation noise for the single-hop EP loop.
#[derive(Debug, Clone)]
pub enum NoiseVar {
    Scalar(f64),
    PerComponent(Vec<f64>),
}

impl NoiseVar {
    fn weights(&self, rows: usize) -> Vec<f64> {
        match self {
            NoiseVar::Scalar(v) => vec![1.0 / v.max(1e-15); rows],
            NoiseVar::PerComponent(vs) => {
                assert_eq!(vs.len(), rows);
                vs.iter().map(|v| 1.0 / v.max(1e-15)).collect()
            }
        }
    }
}

/// Single-hop EP detector for `y = Hx + noise`: alternates the linear
/// Gaussian belief on `x` (a weighted LMMSE solve) with the prior denoiser,
/// exchanging extrinsic messages. This is the joint detector with the relay
/// stages removed.
pub fn ep_single_hop<P: Prior + ?Sized>(
    y_obs: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    noise_var: &NoiseVar,
    prior: &P,
    options: &DetectorOptions,
) -> Result<DetectorResult, DetectorFailure> {
    let source = h.ncols();
    assert_eq!(y_obs.len(), h.nrows());
    assert!(options.max_iterations >= 1);
    let bounds = options.bounds;
    let weights = noise_var.weights(h.nrows());
    let gram = weighted_gram(h, &weights);
    let base_rhs = weighted_adjoint_apply(h, &weights, y_obs.as_slice());

    let mut from_prior = GaussianMessage::flat(source, 1.0);
    let mut safeguards = 0u64;
    let mut per_iteration: Vec<IterationSnapshot> = Vec::new();
    let mut iterations_run = 0;

    let fail = |iteration: usize, kind: FailureKind, snaps: &[IterationSnapshot]| {
        DetectorFailure {
            iteration,
            kind,
            last_estimate: snaps.last().map(|s| s.x_hat.clone()),
        }
    };

    for k in 1..=options.max_iterations {
        let mut a = gram.clone();
        let mut rhs = base_rhs.clone();
        for i in 0..source {
            a[(i, i)] += Complex64::new(1.0 / from_prior.var[i], 0.0);
            rhs[i] += from_prior.mean[i] / from_prior.var[i];
        }
        let factor =
            HpdFactor::new(a).map_err(|e| fail(k, e.into(), &per_iteration))?;
        let mean = factor.solve(&rhs);
        let belief = GaussianMessage {
            mean: mean.iter().copied().collect(),
            var: factor.inverse_diag(),
        };
        let to_prior = belief
            .extrinsic(&from_prior, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;

        let denoised = prior.denoise(&to_prior.mean, &to_prior.var, bounds.v_min);
        safeguards += denoised.fallbacks;
        let posterior = GaussianMessage { mean: denoised.mean, var: denoised.var };
        if !posterior.mean.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(fail(k, FailureKind::NonFinite, &per_iteration));
        }
        let mean_posterior_var = posterior.var.iter().sum::<f64>() / source as f64;
        let converged = per_iteration.last().is_some_and(|prev| {
            options.stop_tol > 0.0
                && posterior_mse(&posterior.mean, &prev.x_hat) < options.stop_tol
        });
        per_iteration.push(IterationSnapshot {
            x_hat: posterior.mean.clone(),
            mean_posterior_var,
        });
        iterations_run = k;

        let ext_fwd = posterior
            .extrinsic(&to_prior, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        from_prior = if options.damping < 1.0 {
            GaussianMessage {
                mean: ext_fwd
                    .mean
                    .iter()
                    .zip(&from_prior.mean)
                    .map(|(n, o)| n * options.damping + o * (1.0 - options.damping))
                    .collect(),
                var: ext_fwd
                    .var
                    .iter()
                    .zip(&from_prior.var)
                    .map(|(n, o)| {
                        (options.damping * n.ln() + (1.0 - options.damping) * o.ln()).exp()
                    })
                    .collect(),
            }
        } else {
            ext_fwd
        };

        if converged {
            break;
        }
    }

    let last = per_iteration.last().expect("at least one iteration ran");
    Ok(DetectorResult {
        x_hat: last.x_hat.clone(),
        iterations_run,
        per_iteration,
        safeguard_count: safeguards,
        schedule: Vec::new(),
    })
}

/// LS on the second hop, then single-hop EP on the first with the LS error
/// whitened to its average diagonal:
/// `noise = σ1² + σ2² · mean(diag((C^H C)^{-1}))`.
pub fn ep_plus_ls<P: Prior + ?Sized>(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    prior: &P,
    options: &DetectorOptions,
) -> Result<DetectorResult, DetectorFailure> {
    let (y_ls, gram_inv_diag) = ls_second_hop(z, c).map_err(|e| DetectorFailure {
        iteration: 0,
        kind: FailureKind::Solve(match e {
            BaselineFailure::RankDeficient(le) | BaselineFailure::Solve(le) => le,
        }),
        last_estimate: None,
    })?;
    let avg = gram_inv_diag.iter().sum::<f64>() / gram_inv_diag.len() as f64;
    let noise = NoiseVar::Scalar(sigma1_sq + sigma2_sq * avg);
    ep_single_hop(&y_ls, h, &noise, prior, options)
}
