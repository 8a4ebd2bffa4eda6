//! LU factorization with partial (row) pivoting, `P A = L U`.

use super::matrix::{axpy_slice, dot, gemm_view, DenseMatrix, View};
use super::LinalgError;

const BLOCK: usize = 64;

/// Packed `L` (unit lower, strict part) and `U` (upper) factors plus the row
/// permutation: row `i` of `P A` is row `perm[i]` of `A`.
#[derive(Clone, Debug)]
pub struct LuFactor {
    pub(crate) lu: DenseMatrix,
    pub(crate) perm: Vec<usize>,
}

impl LuFactor {
    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn packed(&self) -> &DenseMatrix {
        &self.lu
    }

    /// Blocked right-looking factorization: panels of `BLOCK` columns are
    /// factored with row operations, the trailing matrix is updated by GEMM.
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
        let tiny = (n.max(1) as f64) * f64::EPSILON * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for kb in (0..n).step_by(BLOCK) {
            let ke = (kb + BLOCK).min(n);
            // Panel factorization on columns [kb, ke), applying swaps to whole rows.
            for k in kb..ke {
                let (p, pmax) = (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                if !(pmax > tiny) {
                    return Err(LinalgError::Singular { pivot: k });
                }
                if p != k {
                    swap_rows(&mut lu, p, k);
                    perm.swap(p, k);
                }
                let pivot = lu[(k, k)];
                let data = lu.as_mut_slice();
                let (head, tail) = data.split_at_mut((k + 1) * n);
                let prow = &head[k * n + k + 1..k * n + ke];
                for row in tail.chunks_exact_mut(n) {
                    let l = row[k] / pivot;
                    row[k] = l;
                    if l != 0.0 {
                        axpy_slice(-l, prow, &mut row[k + 1..ke]);
                    }
                }
            }
            if ke < n {
                // U12 = L11^{-1} A12 (unit lower forward substitution on rows).
                for i in (kb + 1)..ke {
                    let data = lu.as_mut_slice();
                    let (head, tail) = data.split_at_mut(i * n);
                    let row = &mut tail[..n];
                    for k in kb..i {
                        let l = row[k];
                        if l != 0.0 {
                            axpy_slice(-l, &head[k * n + ke..k * n + n], &mut row[ke..n]);
                        }
                    }
                }
                // A22 -= L21 U12
                let buf = lu.as_mut_slice().as_mut_ptr();
                let l21 = View::of(&lu, ke, kb, n - ke, ke - kb);
                let u12 = View::of(&lu, kb, ke, ke - kb, n - ke);
                let a22 = View::of(&lu, ke, ke, n - ke, n - ke);
                // SAFETY: L21 (cols kb..ke, rows ke..), U12 (rows kb..ke) and
                // A22 (rows ke.., cols ke..) are pairwise disjoint.
                unsafe {
                    gemm_view(-1.0, buf, l21, buf, u12, 1.0, buf, a22);
                }
            }
        }
        Ok(Self { lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.solve_into(b, &mut x);
        x
    }

    /// Solves `A x = b` writing into `x` (no allocation).
    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        for (xi, &p) in x.iter_mut().zip(&self.perm) {
            *xi = b[p];
        }
        for i in 1..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        // U^T z = b
        for k in 0..n {
            let row = self.lu.row(k);
            z[k] /= row[k];
            let zk = z[k];
            axpy_slice(-zk, &row[k + 1..], &mut z[k + 1..]);
        }
        // L^T w = z
        for k in (0..n).rev() {
            let zk = z[k];
            axpy_slice(-zk, &self.lu.row(k)[..k], &mut z[..k]);
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// `P^T L U`, for reconstruction checks.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim();
        let l = DenseMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.lu[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        });
        let u = DenseMatrix::from_fn(n, n, |i, j| if j >= i { self.lu[(i, j)] } else { 0.0 });
        let pa = l.matmul(&u);
        let mut a = DenseMatrix::zeros(n, n);
        for (i, &p) in self.perm.iter().enumerate() {
            a.row_mut(p).copy_from_slice(pa.row(i));
        }
        a
    }
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    let n = m.cols();
    let (lo, hi) = (a.min(b), a.max(b));
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(hi * n);
    head[lo * n..lo * n + n].swap_with_slice(&mut tail[..n]);
}
