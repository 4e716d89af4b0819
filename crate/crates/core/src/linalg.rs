//! Hermitian positive-definite solves and Gram-matrix kernels.
//!
//! Every linear stage of the detectors solves a system of the form
//! `(A^H Diag(w) A + Diag(p)) u = b` and needs the diagonal of the system
//! inverse. [`HpdFactor`] wraps a Cholesky factorization and recovers those
//! diagonals from the triangular factor by forward substitution, so the full
//! inverse is never formed on the hot path (the explicit inverse exists only
//! for the small-instance oracles). The Gram kernels run on contiguous
//! column slices: with nalgebra's column-major storage that keeps the inner
//! loops tight, which matters since the Monte-Carlo sweeps spend nearly all
//! their time here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (size {size})")]
    NotPositiveDefinite { size: usize },
    #[error("eigenvalue decomposition failed (size {size})")]
    EigenFailure { size: usize },
    #[error("matrix is numerically singular (size {size})")]
    Singular { size: usize },
}

/// Cholesky factorization `A = L L^H` of a Hermitian positive-definite
/// matrix, with diagonal-of-inverse extraction.
pub struct HpdFactor {
    /// Lower factor stored row-major so forward substitutions stream
    /// through memory.
    lower: Vec<Complex64>,
    n: usize,
}

impl HpdFactor {
    pub fn new(a: DMatrix<Complex64>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let chol = a
            .cholesky()
            .ok_or(LinalgError::NotPositiveDefinite { size: n })?;
        let l = chol.l();
        let mut lower = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..=r {
                lower[r * n + k] = l[(r, k)];
            }
        }
        // complex square roots always exist, so nalgebra happily factors
        // indefinite Hermitian matrices; a valid factor has a strictly
        // positive real diagonal
        for i in 0..n {
            let d = lower[i * n + i];
            if !(d.re.is_finite() && d.re > 0.0 && d.im.abs() <= 1e-8 * d.re) {
                return Err(LinalgError::NotPositiveDefinite { size: n });
            }
        }
        Ok(Self { lower, n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solve `L u = b` against the lower factor alone, i.e. whiten `b`.
    pub fn forward_substitute(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let l = &self.lower;
        let mut u: Vec<Complex64> = b.iter().copied().collect();
        for r in 0..n {
            let mut s = u[r];
            for k in 0..r {
                s -= l[r * n + k] * u[k];
            }
            u[r] = s / l[r * n + r];
        }
        DVector::from_vec(u)
    }

    /// Solve `A u = b`.
    pub fn solve(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.n;
        let l = &self.lower;
        let mut u: Vec<Complex64> = self.forward_substitute(b).iter().copied().collect();
        // backward: L^H u = v
        for r in (0..n).rev() {
            let mut s = u[r];
            for k in r + 1..n {
                s -= l[k * n + r].conj() * u[k];
            }
            u[r] = s / l[r * n + r];
        }
        DVector::from_vec(u)
    }

    /// Diagonal of `A^{-1}`, recovered from the factor: column `i` of
    /// `L^{-1}` is found by forward substitution against the unit vector
    /// `e_i`, and `(A^{-1})_{ii}` is its squared norm.
    pub fn inverse_diag(&self) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut diag = vec![0.0; n];
        let mut col = vec![ZERO; n];
        for i in 0..n {
            col[i] = Complex64::new(1.0, 0.0) / l[i * n + i];
            for r in i + 1..n {
                let mut s = ZERO;
                for k in i..r {
                    s += l[r * n + k] * col[k];
                }
                col[r] = -s / l[r * n + r];
            }
            diag[i] = col[i..n].iter().map(|v| v.norm_sqr()).sum();
        }
        diag
    }

    /// Diagonal of `B A^{-1} B^H` for a rectangular `B`, one forward
    /// substitution per row of `B`.
    pub fn congruence_diag(&self, b: &DMatrix<Complex64>) -> Vec<f64> {
        assert_eq!(b.ncols(), self.n);
        let n = self.n;
        let l = &self.lower;
        let mut out = vec![0.0; b.nrows()];
        let mut g = vec![ZERO; n];
        for row in 0..b.nrows() {
            for k in 0..n {
                g[k] = b[(row, k)].conj();
            }
            for r in 0..n {
                let mut s = g[r];
                for k in 0..r {
                    s -= l[r * n + k] * g[k];
                }
                g[r] = s / l[r * n + r];
            }
            out[row] = g.iter().map(|v| v.norm_sqr()).sum();
        }
        out
    }

    /// Explicit `A^{-1}`; used by the baselines that need a full error
    /// covariance and by the test oracles.
    pub fn inverse(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = Complex64::new(1.0, 0.0);
            let col = self.solve(&e);
            out.set_column(i, &col);
        }
        out
    }
}

/// `A^H A`, filling both triangles; columns of `A` are contiguous, so each
/// entry is a straight dot product of two column slices.
pub fn hermitian_gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let cols = a.ncols();
    let mut g = DMatrix::zeros(cols, cols);
    for j in 0..cols {
        let cj = a.column(j);
        let cj = cj.as_slice();
        for i in 0..=j {
            let ci = a.column(i);
            let ci = ci.as_slice();
            let mut s = ZERO;
            for k in 0..ci.len() {
                s += ci[k].conj() * cj[k];
            }
            g[(i, j)] = s;
            if i != j {
                g[(j, i)] = s.conj();
            }
        }
    }
    g
}

/// `A A^H` for a rectangular `A`.
pub fn hermitian_outer(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    hermitian_gram(&a.adjoint())
}

/// `A^H Diag(w) A` with a real positive weight per row of `A`.
pub fn weighted_gram(a: &DMatrix<Complex64>, w: &[f64]) -> DMatrix<Complex64> {
    assert_eq!(a.nrows(), w.len());
    let cols = a.ncols();
    let mut g = DMatrix::zeros(cols, cols);
    for j in 0..cols {
        let cj = a.column(j);
        let cj = cj.as_slice();
        for i in 0..=j {
            let ci = a.column(i);
            let ci = ci.as_slice();
            let mut s = ZERO;
            for k in 0..ci.len() {
                s += ci[k].conj() * cj[k] * w[k];
            }
            g[(i, j)] = s;
            if i != j {
                g[(j, i)] = s.conj();
            }
        }
    }
    g
}

/// `A^H Diag(w) v`.
pub fn weighted_adjoint_apply(
    a: &DMatrix<Complex64>,
    w: &[f64],
    v: &[Complex64],
) -> DVector<Complex64> {
    assert_eq!(a.nrows(), w.len());
    assert_eq!(a.nrows(), v.len());
    let mut out = DVector::zeros(a.ncols());
    for j in 0..a.ncols() {
        let cj = a.column(j);
        let cj = cj.as_slice();
        let mut s = ZERO;
        for k in 0..cj.len() {
            s += cj[k].conj() * v[k] * w[k];
        }
        out[j] = s;
    }
    out
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &DMatrix<Complex64>) -> Result<Vec<f64>, LinalgError> {
    let n = a.nrows();
    let eig = a.clone().try_symmetric_eigen(1e-13, 10_000)
        .ok_or(LinalgError::EigenFailure { size: n })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(vals)
}
