//! Self-contained dense linear algebra: Cholesky and pivoted LU
//! factorizations, multi-right-hand-side solves, 2-norm condition estimates,
//! and eigenvalues of nonsymmetric matrices.

mod cholesky;
mod dmat;
mod eigen;
mod lu;
mod matrix;

use thiserror::Error;

pub use cholesky::CholeskyFactor;
pub use dmat::{read_dmat, write_dmat};
pub use eigen::{conjugate_asymmetry, eigenvalues, eigenvalues_with, EigenOptions, DEFAULT_EIGEN_CAP};
pub use lu::LuFactor;
pub use matrix::{axpy_slice, dot, gemm_acc, norm2_vec, norm_inf_vec, DenseMatrix};

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix not positive definite: Cholesky failed at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("eigenvalue problem of size {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("QR iteration did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },
    #[error("eigenvalue sum deviates from trace (relative {relative:.3e})")]
    TraceMismatch { relative: f64 },
    #[error("dmat format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Cholesky,
    PartialPivLu,
}

/// A factored square matrix, immutable once built.
#[derive(Clone, Debug)]
pub enum Factorization {
    Cholesky(CholeskyFactor),
    Lu(LuFactor),
}

pub fn cholesky(a: &DenseMatrix) -> Result<Factorization, LinalgError> {
    CholeskyFactor::factor(a).map(Factorization::Cholesky)
}

pub fn lu(a: &DenseMatrix) -> Result<Factorization, LinalgError> {
    LuFactor::factor(a).map(Factorization::Lu)
}

impl Factorization {
    pub fn kind(&self) -> FactorKind {
        match self {
            Factorization::Cholesky(_) => FactorKind::Cholesky,
            Factorization::Lu(_) => FactorKind::PartialPivLu,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factorization::Cholesky(c) => c.dim(),
            Factorization::Lu(f) => f.dim(),
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Cholesky(c) => c.solve_vec(b),
            Factorization::Lu(f) => f.solve_vec(b),
        }
    }

    pub fn solve_transpose_vec(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Cholesky(c) => c.solve_vec(b),
            Factorization::Lu(f) => f.solve_transpose_vec(b),
        }
    }

    /// `X = A^{-1} B` for a multi-column `B`.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let n = self.dim();
        if b.rows() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: (n, b.cols()),
                found: (b.rows(), b.cols()),
            });
        }
        match self {
            Factorization::Cholesky(c) => {
                // A symmetric: A^{-1} B = (B^T A^{-1})^T.
                let mut xt = b.transpose();
                c.solve_right_in_place(&mut xt);
                Ok(xt.transpose())
            }
            Factorization::Lu(f) => {
                let bt = b.transpose();
                let mut xt = DenseMatrix::zeros(b.cols(), n);
                for j in 0..b.cols() {
                    f.solve_into(bt.row(j), xt.row_mut(j));
                }
                Ok(xt.transpose())
            }
        }
    }

    /// `X = B A^{-1}` for a matrix `B` with `n` columns.
    pub fn solve_right(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let n = self.dim();
        if b.cols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: (b.rows(), n),
                found: (b.rows(), b.cols()),
            });
        }
        match self {
            Factorization::Cholesky(c) => {
                let mut x = b.clone();
                c.solve_right_in_place(&mut x);
                Ok(x)
            }
            Factorization::Lu(f) => {
                // X A = B  <=>  A^T X^T = B^T, one row of X at a time.
                let mut x = DenseMatrix::zeros(b.rows(), n);
                for i in 0..b.rows() {
                    let row = f.solve_transpose_vec(b.row(i));
                    x.row_mut(i).copy_from_slice(&row);
                }
                Ok(x)
            }
        }
    }

    /// The matrix the factors represent.
    pub fn reconstruct(&self) -> DenseMatrix {
        match self {
            Factorization::Cholesky(c) => c.reconstruct(),
            Factorization::Lu(f) => f.reconstruct(),
        }
    }
}

/// Estimate of `kappa_2(A) = sigma_max / sigma_min`.
///
/// `sigma_max` comes from power iteration on `A^T A`, `sigma_min` from
/// inverse power iteration through the factorization. Returns `+inf` when
/// the inverse iteration overflows.
pub fn cond2_estimate(a: &DenseMatrix, f: &Factorization) -> f64 {
    const ITERS: usize = 60;
    let n = a.rows();
    assert_eq!(n, f.dim());
    if n == 0 {
        return 1.0;
    }
    let start: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract())
        .collect();

    let normalize = |v: &mut Vec<f64>| -> f64 {
        let s = norm2_vec(v);
        if s > 0.0 && s.is_finite() {
            v.iter_mut().for_each(|x| *x /= s);
        }
        s
    };

    let mut v = start.clone();
    normalize(&mut v);
    let mut smax2 = 0.0;
    for _ in 0..ITERS {
        let av = a.matvec(&v);
        let mut w = a.matvec_t(&av);
        smax2 = normalize(&mut w);
        v = w;
    }

    let mut v = start;
    normalize(&mut v);
    let mut inv2 = 0.0;
    for _ in 0..ITERS {
        let y = f.solve_vec(&v);
        let mut w = f.solve_transpose_vec(&y);
        inv2 = normalize(&mut w);
        if !inv2.is_finite() {
            return f64::INFINITY;
        }
        v = w;
    }
    let k = (smax2 * inv2).sqrt();
    if k.is_finite() {
        k
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cond_identity_and_diag() {
        let i = DenseMatrix::identity(4);
        let f = cholesky(&i).unwrap();
        assert!((cond2_estimate(&i, &f) - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_diagonal(&[1.0, 1e6]);
        let f = lu(&d).unwrap();
        let k = cond2_estimate(&d, &f);
        assert!(k > 0.5e6 && k < 2e6, "{k}");
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let i = DenseMatrix::identity(3);
        let b = DenseMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        for f in [cholesky(&i).unwrap(), lu(&i).unwrap()] {
            assert_eq!(f.solve(&b).unwrap(), b);
        }
    }
}
