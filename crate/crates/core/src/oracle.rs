//! Exact reference posteriors on small instances.
//!
//! The relay signal integrates out analytically, so the observation given
//! the symbols is complex Gaussian: `z | x ~ CN(CHx, σ1² C C^H + σ2² I)`.
//! For a discrete prior the exact posterior follows from enumerating all
//! `K^L` candidate symbol vectors against that likelihood; for a Gaussian
//! prior it is available in closed form. Both serve as ground truth for the
//! detectors and the acceptance suite, so this module favors transparency
//! over speed and is the one place an explicit matrix inverse is allowed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::constellation::Constellation;
use crate::linalg::{HpdFactor, LinalgError};

/// Hard cap on the number of enumerated candidates.
pub const ENUMERATION_BOUND: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration needs {candidates} candidates, above the bound {bound}")]
    TooManyCandidates { candidates: u128, bound: u64 },
    #[error("compound noise covariance is singular")]
    SingularCovariance(#[from] LinalgError),
}

/// Exact discrete posterior: per-symbol marginals, posterior mean, and the
/// conditional MMSE.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// `marginals[i][k]` is the posterior probability that symbol `i` is the
    /// constellation point `k`; each row sums to one.
    pub marginals: Vec<Vec<f64>>,
    pub mean: Vec<Complex64>,
    /// Posterior variance averaged over components — the MSE of the
    /// posterior mean, conditional on this observation.
    pub mmse: f64,
}

/// Closed-form posterior under a zero-mean Gaussian prior.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<Complex64>,
    pub cov_diag: Vec<f64>,
    pub mmse: f64,
}

fn compound_covariance_factor(
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
) -> Result<HpdFactor, OracleError> {
    let n = c.nrows();
    let mut cov = c * c.adjoint() * Complex64::new(sigma1_sq, 0.0);
    let floor = sigma2_sq.max(1e-15);
    for i in 0..n {
        cov[(i, i)] += Complex64::new(floor, 0.0);
    }
    Ok(HpdFactor::new(cov)?)
}

/// Lower-triangular forward substitution applied to the columns of a matrix.
fn whiten_columns(factor: &HpdFactor, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.clone_owned();
    for j in 0..m.ncols() {
        let col = factor.forward_substitute(&m.column(j).into_owned());
        out.set_column(j, &col);
    }
    out
}

/// Enumerate all `K^L` symbol vectors and form the exact posterior.
pub fn exact_discrete_posterior(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    prior: &Constellation,
) -> Result<ExactPosterior, OracleError> {
    let source = h.ncols();
    let k = prior.size();
    let candidates = (k as u128).pow(source as u32);
    if candidates > ENUMERATION_BOUND as u128 {
        return Err(OracleError::TooManyCandidates {
            candidates,
            bound: ENUMERATION_BOUND,
        });
    }
    let total = candidates as usize;

    let factor = compound_covariance_factor(c, sigma1_sq, sigma2_sq)?;
    let g = c * h;
    // whiten once; each candidate then costs one matrix-vector residual
    let w = whiten_columns(&factor, &g);
    let z_w = factor.forward_substitute(z);
    let log_priors: Vec<f64> = prior.probs().iter().map(|p| p.max(1e-300).ln()).collect();

    let mut digits = vec![0usize; source];
    let mut log_weights = Vec::with_capacity(total);
    let mut max_lw = f64::NEG_INFINITY;
    for cand in 0..total {
        let mut idx = cand;
        for d in digits.iter_mut() {
            *d = idx % k;
            idx /= k;
        }
        let mut residual = z_w.clone();
        for (col, &d) in digits.iter().enumerate() {
            let point = prior.points()[d];
            for row in 0..residual.len() {
                residual[row] -= w[(row, col)] * point;
            }
        }
        let mut lw = -residual.norm_squared();
        for &d in &digits {
            lw += log_priors[d];
        }
        log_weights.push(lw);
        if lw > max_lw {
            max_lw = lw;
        }
    }

    let mut marginals = vec![vec![0.0; k]; source];
    let mut norm = 0.0;
    for (cand, &lw) in log_weights.iter().enumerate() {
        let wgt = (lw - max_lw).exp();
        norm += wgt;
        let mut idx = cand;
        for marginal in marginals.iter_mut() {
            marginal[idx % k] += wgt;
            idx /= k;
        }
    }

    let mut mean = Vec::with_capacity(source);
    let mut mmse = 0.0;
    for marginal in marginals.iter_mut() {
        let mut mu = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for (kk, p) in marginal.iter_mut().enumerate() {
            *p /= norm;
            mu += prior.points()[kk] * *p;
            second += prior.points()[kk].norm_sqr() * *p;
        }
        mmse += second - mu.norm_sqr();
        mean.push(mu);
    }
    mmse /= source as f64;

    Ok(ExactPosterior { marginals, mean, mmse })
}

/// Closed-form posterior for `x ~ CN(0, prior_var I)`:
/// `cov = (G^H Σ^{-1} G + I/prior_var)^{-1}`, `mean = cov G^H Σ^{-1} z`,
/// with `G = CH` and `Σ = σ1² C C^H + σ2² I`.
pub fn exact_gaussian_posterior(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    prior_var: f64,
) -> Result<GaussianPosterior, OracleError> {
    assert!(prior_var > 0.0);
    let source = h.ncols();
    let factor = compound_covariance_factor(c, sigma1_sq, sigma2_sq)?;
    let g = c * h;
    let w = whiten_columns(&factor, &g);
    let z_w = factor.forward_substitute(z);

    let mut info = w.adjoint() * &w;
    for i in 0..source {
        info[(i, i)] += Complex64::new(1.0 / prior_var, 0.0);
    }
    let cov = info
        .try_inverse()
        .ok_or(OracleError::SingularCovariance(LinalgError::Singular { size: source }))?;
    let mean = &cov * (w.adjoint() * z_w);
    let cov_diag: Vec<f64> = (0..source).map(|i| cov[(i, i)].re).collect();
    let mmse = cov_diag.iter().sum::<f64>() / source as f64;
    Ok(GaussianPosterior { mean, cov_diag, mmse })
}
