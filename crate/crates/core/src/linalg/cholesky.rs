//! Blocked Cholesky factorization and triangular solves against `L L^T`.

use rayon::prelude::*;

use super::matrix::{axpy_slice, dot, gemm_view, DenseMatrix, View};
use super::LinalgError;

const BLOCK: usize = 96;

/// Lower-triangular factor `L` with `A = L L^T`; the strict upper triangle is zero.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub(crate) l: DenseMatrix,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub(crate) fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if !a.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = a.rows();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let asym = a.asymmetry();
        if asym > 1e-12 * scale {
            return Err(LinalgError::NotSymmetric {
                asymmetry: asym / scale,
            });
        }

        let mut l = a.clone();
        for kb in (0..n).step_by(BLOCK) {
            let ke = (kb + BLOCK).min(n);
            let nb = ke - kb;
            if kb > 0 {
                let buf = l.as_mut_slice().as_mut_ptr();
                let panel_prev = View::of(&l, kb, 0, n - kb, kb);
                let diag_prev = View::of(&l, kb, 0, nb, kb);
                let target = View::of(&l, kb, kb, n - kb, nb);
                // SAFETY: the source columns [0, kb) and the target columns
                // [kb, ke) are disjoint regions of the same buffer.
                unsafe {
                    gemm_view(-1.0, buf, panel_prev, buf, diag_prev.t(), 1.0, buf, target);
                }
            }
            for j in kb..ke {
                let d = {
                    let row = &l.row(j)[kb..j];
                    l[(j, j)] - dot(row, row)
                };
                if !(d > 0.0) || !d.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite { pivot: j });
                }
                let djj = d.sqrt();
                l[(j, j)] = djj;
                let data = l.as_mut_slice();
                let (head, tail) = data.split_at_mut((j + 1) * n);
                let pivot_row = &head[j * n + kb..j * n + j];
                for row in tail.chunks_exact_mut(n) {
                    let s = dot(&row[kb..j], pivot_row);
                    row[j] = (row[j] - s) / djj;
                }
            }
        }
        for i in 0..n {
            l.row_mut(i)[i + 1..].iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(Self { l })
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / l[(i, i)];
        }
        for k in (0..n).rev() {
            let xk = y[k] / l[(k, k)];
            y[k] = xk;
            axpy_slice(-xk, &l.row(k)[..k], &mut y[..k]);
        }
        y
    }

    /// Solves `X A = B` in place (`B` has `n` columns), i.e. `X = B A^{-1}`.
    pub fn solve_right_in_place(&self, x: &mut DenseMatrix) {
        let n = self.dim();
        assert_eq!(x.cols(), n, "right solve needs B with n columns");
        let m = x.rows();
        let l = &self.l;

        // Y L^T = B, blocks of columns left to right.
        for jb in (0..n).step_by(BLOCK) {
            let je = (jb + BLOCK).min(n);
            let nb = je - jb;
            if jb > 0 {
                let xbuf = x.as_mut_slice().as_mut_ptr();
                let src = View::of(x, 0, 0, m, jb);
                let dst = View::of(x, 0, jb, m, nb);
                let lv = View::of(l, jb, 0, nb, jb);
                // SAFETY: columns [0, jb) and [jb, je) of X are disjoint.
                unsafe {
                    gemm_view(-1.0, xbuf, src, l.as_slice().as_ptr(), lv.t(), 1.0, xbuf, dst);
                }
            }
            x.as_mut_slice().par_chunks_exact_mut(n).for_each(|row| {
                for j in jb..je {
                    let s = dot(&row[jb..j], &l.row(j)[jb..j]);
                    row[j] = (row[j] - s) / l[(j, j)];
                }
            });
        }

        // G L = Y, blocks of columns right to left.
        let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
        for &jb in starts.iter().rev() {
            let je = (jb + BLOCK).min(n);
            let nb = je - jb;
            if je < n {
                let xbuf = x.as_mut_slice().as_mut_ptr();
                let src = View::of(x, 0, je, m, n - je);
                let dst = View::of(x, 0, jb, m, nb);
                let lv = View::of(l, je, jb, n - je, nb);
                // SAFETY: columns [je, n) and [jb, je) of X are disjoint.
                unsafe {
                    gemm_view(-1.0, xbuf, src, l.as_slice().as_ptr(), lv, 1.0, xbuf, dst);
                }
            }
            x.as_mut_slice().par_chunks_exact_mut(n).for_each(|row| {
                for j in (jb..je).rev() {
                    let mut s = 0.0;
                    for k in (j + 1)..je {
                        s += row[k] * l[(k, j)];
                    }
                    row[j] = (row[j] - s) / l[(j, j)];
                }
            });
        }
    }

    /// `L L^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.l.matmul(&self.l.transpose())
    }
}
