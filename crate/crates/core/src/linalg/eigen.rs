//! Eigenvalues of a general real matrix.
//!
//! Pipeline: diagonal balancing, Householder reduction to upper Hessenberg
//! form, then the Francis implicit double-shift QR iteration with deflation
//! and exceptional shifts. Only eigenvalues are computed; no Schur vectors.

use num_complex::Complex64;

use super::matrix::{dot, DenseMatrix};
use super::LinalgError;

/// Default size cap for dense eigenvalue problems.
pub const DEFAULT_EIGEN_CAP: usize = 2500;

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub cap: usize,
    pub balance: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_EIGEN_CAP,
            balance: true,
        }
    }
}

pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>, LinalgError> {
    eigenvalues_with(a, EigenOptions::default())
}

pub fn eigenvalues_with(a: &DenseMatrix, opts: EigenOptions) -> Result<Vec<Complex64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if n > opts.cap {
        return Err(LinalgError::TooLarge { n, cap: opts.cap });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let mut h = a.clone();
    if opts.balance {
        balance(&mut h);
    }
    hessenberg(&mut h);
    let eig = hqr(&mut h)?;

    // Trace identity: sum of eigenvalues equals the trace.
    let tr = a.trace();
    let sum: Complex64 = eig.iter().sum();
    let scale = eig.iter().map(|z| z.norm()).sum::<f64>().max(tr.abs()).max(f64::MIN_POSITIVE);
    let mismatch = ((sum.re - tr).abs() + sum.im.abs()) / scale;
    if mismatch > 1e-8 {
        return Err(LinalgError::TraceMismatch { relative: mismatch });
    }
    Ok(eig)
}

/// Parlett–Reinsch balancing with radix-2 scalings (exact in floating point).
fn balance(a: &mut DenseMatrix) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.rows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    a.row_mut(i).iter_mut().for_each(|v| *v *= g);
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form. Entries below
/// the subdiagonal are zeroed.
fn hessenberg(a: &mut DenseMatrix) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    for m in 1..(n - 1) {
        // Householder vector annihilating a[m+1.., m-1].
        let scale: f64 = (m..n).map(|i| a[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut h = 0.0;
        for i in m..n {
            u[i] = a[(i, m - 1)] / scale;
            h += u[i] * u[i];
        }
        let g = if u[m] > 0.0 { -h.sqrt() } else { h.sqrt() };
        h -= u[m] * g;
        u[m] -= g;
        if h == 0.0 {
            continue;
        }
        // Left: A[m.., :] -= u (u^T A[m.., :]) / h, columns m-1.. only.
        w[m - 1..].iter_mut().for_each(|v| *v = 0.0);
        for i in m..n {
            let ui = u[i];
            if ui != 0.0 {
                let row = &a.row(i)[m - 1..];
                for (wj, &aij) in w[m - 1..].iter_mut().zip(row) {
                    *wj += ui * aij;
                }
            }
        }
        for i in m..n {
            let f = u[i] / h;
            if f != 0.0 {
                let row = &mut a.row_mut(i)[m - 1..];
                for (aij, &wj) in row.iter_mut().zip(&w[m - 1..]) {
                    *aij -= f * wj;
                }
            }
        }
        // Right: A[:, m..] -= (A[:, m..] u) u^T / h.
        for i in 0..n {
            let row = &mut a.row_mut(i)[m..];
            let f = dot(row, &u[m..]) / h;
            if f != 0.0 {
                for (aij, &uj) in row.iter_mut().zip(&u[m..]) {
                    *aij -= f * uj;
                }
            }
        }
        a[(m, m - 1)] = scale * g;
        for i in (m + 1)..n {
            a[(i, m - 1)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
fn hqr(a: &mut DenseMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.rows();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let max_sweeps = 60 * n.max(1);
    let mut sweeps = 0usize;
    let mut nn: isize = n as isize - 1;
    let mut t = 0.0;
    let mut its = 0usize;
    while nn >= 0 {
        let nu = nn as usize;
        // Look for a single small subdiagonal element.
        let mut l = nu;
        while l > 0 {
            let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
            if s == 0.0 {
                s = anorm;
            }
            if a[(l, l - 1)].abs() <= f64::EPSILON * s {
                a[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        let mut x = a[(nu, nu)];
        if l == nu {
            wr[nu] = x + t;
            wi[nu] = 0.0;
            nn -= 1;
            its = 0;
            continue;
        }
        let mut y = a[(nu - 1, nu - 1)];
        let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
        if l == nu - 1 {
            let p = 0.5 * (y - x);
            let q = p * p + w;
            let mut z = q.abs().sqrt();
            x += t;
            if q >= 0.0 {
                z = p + sign(z, p);
                wr[nu - 1] = x + z;
                wr[nu] = x + z;
                if z != 0.0 {
                    wr[nu] = x - w / z;
                }
                wi[nu - 1] = 0.0;
                wi[nu] = 0.0;
            } else {
                wr[nu - 1] = x + p;
                wr[nu] = x + p;
                wi[nu - 1] = -z;
                wi[nu] = z;
            }
            nn -= 2;
            its = 0;
            continue;
        }

        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(LinalgError::EigenNoConvergence { sweeps });
        }
        if its > 0 && its % 10 == 0 {
            // Exceptional shift.
            t += x;
            for i in 0..=nu {
                a[(i, i)] -= x;
            }
            let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
            x = 0.75 * s;
            y = x;
            w = -0.4375 * s * s;
        }
        its += 1;

        // Look for two consecutive small subdiagonal elements.
        let mut m = nu - 2;
        let (mut p, mut q, mut r);
        loop {
            let z = a[(m, m)];
            let r0 = x - z;
            let s0 = y - z;
            p = (r0 * s0 - w) / a[(m + 1, m)] + a[(m, m + 1)];
            q = a[(m + 1, m + 1)] - z - r0 - s0;
            r = a[(m + 2, m + 1)];
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m == l {
                break;
            }
            let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
            let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
            if u <= f64::EPSILON * v {
                break;
            }
            m -= 1;
        }
        for i in m..(nu - 1) {
            a[(i + 2, i)] = 0.0;
            if i != m {
                a[(i + 2, i - 1)] = 0.0;
            }
        }
        // Double QR step on rows l..=nn and columns m..=nn.
        let mut k = m;
        while k < nu {
            if k != m {
                p = a[(k, k - 1)];
                q = a[(k + 1, k - 1)];
                r = 0.0;
                if k + 1 != nu {
                    r = a[(k + 2, k - 1)];
                }
                x = p.abs() + q.abs() + r.abs();
                if x != 0.0 {
                    p /= x;
                    q /= x;
                    r /= x;
                }
            }
            let s = sign((p * p + q * q + r * r).sqrt(), p);
            if s != 0.0 {
                if k == m {
                    if l != m {
                        a[(k, k - 1)] = -a[(k, k - 1)];
                    }
                } else {
                    a[(k, k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                // Row modification.
                for j in k..=nu {
                    let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                    if k + 1 != nu {
                        pp += r * a[(k + 2, j)];
                        a[(k + 2, j)] -= pp * z;
                    }
                    a[(k + 1, j)] -= pp * y;
                    a[(k, j)] -= pp * x;
                }
                // Column modification.
                let mmin = if nu < k + 3 { nu } else { k + 3 };
                for i in l..=mmin {
                    let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                    if k + 1 != nu {
                        pp += z * a[(i, k + 2)];
                        a[(i, k + 2)] -= pp * r;
                    }
                    a[(i, k + 1)] -= pp * q;
                    a[(i, k)] -= pp;
                }
            }
            k += 1;
        }
    }
    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex64::new(re, im))
        .collect())
}

/// Largest deviation between the multiset and its conjugate, after matching
/// each eigenvalue with its nearest conjugate partner.
pub fn conjugate_asymmetry(eigs: &[Complex64]) -> f64 {
    let mut worst = 0.0_f64;
    for z in eigs {
        let target = z.conj();
        let best = eigs
            .iter()
            .map(|w| (w - target).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn diagonal() {
        let a = DenseMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let e = sorted_re(eigenvalues(&a).unwrap());
        for (k, z) in e.iter().enumerate() {
            assert!((z.re - (k + 1) as f64).abs() < 1e-14 && z.im == 0.0);
        }
    }

    #[test]
    fn rotation() {
        let a = DenseMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let e = sorted_re(eigenvalues(&a).unwrap());
        assert!(e[0].re.abs() < 1e-15 && (e[0].im + 1.0).abs() < 1e-15);
        assert!((e[1].im - 1.0).abs() < 1e-15);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let a = DenseMatrix::from_rows(&[
            vec![10.0, -35.0, 50.0, -24.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let e = sorted_re(eigenvalues(&a).unwrap());
        for (k, z) in e.iter().enumerate() {
            assert!((z.re - (k + 1) as f64).abs() < 1e-10, "{e:?}");
            assert!(z.im.abs() < 1e-10);
        }
    }

    #[test]
    fn cap_enforced() {
        let a = DenseMatrix::identity(5);
        let opts = EigenOptions { cap: 4, balance: true };
        assert!(matches!(
            eigenvalues_with(&a, opts),
            Err(LinalgError::TooLarge { n: 5, cap: 4 })
        ));
    }
}
