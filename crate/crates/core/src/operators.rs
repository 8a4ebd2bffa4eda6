//! Kernel interpolation and differentiation matrices on a node set.
//!
//! With `A_ij = phi(|x_i - x_j|)` and the projected kernel gradients
//! `B^x_ij = [(I - n_i n_i^T)(x_i - x_j)]_x eta(|x_i - x_j|)` (likewise `y`,
//! `z`), the gradient matrices are `G = B A^{-1}` and the Laplace–Beltrami
//! matrix is `L = Gx Gx + Gy Gy + Gz Gz`.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::vec3::{self, Vec3};
use crate::geometry::NodeSet;
use crate::kernels::Kernel;
use crate::linalg::{cholesky, cond2_estimate, gemm_acc, DenseMatrix, Factorization, LinalgError};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("expected {expected} values, got {found}")]
    Length { expected: usize, found: usize },
    #[error("node set is empty")]
    Empty,
}

fn check_len(expected: usize, found: usize) -> Result<(), OperatorError> {
    if expected == found {
        Ok(())
    } else {
        Err(OperatorError::Length { expected, found })
    }
}

pub fn interpolation_matrix(k: &Kernel, points: &[Vec3]) -> DenseMatrix {
    let n = points.len();
    let mut a = DenseMatrix::zeros(n, n);
    a.as_mut_slice()
        .par_chunks_exact_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = k.phi(vec3::dist(points[i], points[j]));
            }
        });
    a
}

/// The three `B` matrices stacked as a `3N x N` matrix (x rows, then y, then z).
pub fn build_b_stacked(k: &Kernel, ns: &NodeSet) -> DenseMatrix {
    let n = ns.len();
    let mut b = DenseMatrix::zeros(3 * n, n);
    let (bx, rest) = b.as_mut_slice().split_at_mut(n * n);
    let (by, bz) = rest.split_at_mut(n * n);
    bx.par_chunks_exact_mut(n.max(1))
        .zip(by.par_chunks_exact_mut(n.max(1)))
        .zip(bz.par_chunks_exact_mut(n.max(1)))
        .enumerate()
        .for_each(|(i, ((rx, ry), rz))| {
            let xi = ns.points[i];
            let ni = ns.normals[i];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = vec3::sub(xi, ns.points[j]);
                let eta = k.eta(vec3::norm(d));
                let t = vec3::tangential(ni, d);
                rx[j] = t[0] * eta;
                ry[j] = t[1] * eta;
                rz[j] = t[2] * eta;
            }
        });
    b
}

fn split3(stacked: DenseMatrix) -> [DenseMatrix; 3] {
    let n = stacked.cols();
    let data = stacked.into_vec();
    let mk = |k: usize| DenseMatrix::from_row_major(n, n, data[k * n * n..(k + 1) * n * n].to_vec()).unwrap();
    [mk(0), mk(1), mk(2)]
}

pub fn build_b_matrices(k: &Kernel, ns: &NodeSet) -> [DenseMatrix; 3] {
    split3(build_b_stacked(k, ns))
}

/// `G = B A^{-1}` by a right triangular solve against the Cholesky factor.
pub fn build_gradient_matrices(
    k: &Kernel,
    ns: &NodeSet,
    a_factor: &Factorization,
) -> Result<[DenseMatrix; 3], OperatorError> {
    let mut b = build_b_stacked(k, ns);
    match a_factor {
        Factorization::Cholesky(c) => c.solve_right_in_place(&mut b),
        Factorization::Lu(_) => b = a_factor.solve_right(&b)?,
    }
    Ok(split3(b))
}

pub fn build_laplacian(g: &[DenseMatrix; 3]) -> DenseMatrix {
    let n = g[0].rows();
    let mut l = DenseMatrix::zeros(n, n);
    for gk in g {
        gemm_acc(1.0, gk, gk, 1.0, &mut l);
    }
    l
}

/// Analytic `(I - n n^T) grad_x phi(|x - c|)`.
pub fn projected_kernel_gradient(k: &Kernel, center: Vec3, x: Vec3, n: Vec3) -> Vec3 {
    let d = vec3::sub(x, center);
    vec3::scale(k.eta(vec3::norm(d)), vec3::tangential(n, d))
}

/// IMQ shape parameter used for stability scans and applications on each
/// built-in surface.
pub fn default_imq_epsilon(surface: &str) -> Option<f64> {
    match surface {
        "sphere" | "torus" => Some(2.8),
        "rbc" => Some(4.0),
        "cyclide" => Some(2.0),
        "bretzel2" => Some(6.5),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub laplacian: bool,
    pub cond_estimate: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            laplacian: true,
            cond_estimate: true,
        }
    }
}

/// Immutable operator bundle for one kernel and node set.
#[derive(Clone, Debug)]
pub struct SurfaceOperators {
    kernel: Kernel,
    nodes: NodeSet,
    a: DenseMatrix,
    a_factor: Factorization,
    g: [DenseMatrix; 3],
    l: Option<DenseMatrix>,
    cond: Option<f64>,
}

impl SurfaceOperators {
    pub fn build(kernel: &Kernel, nodes: &NodeSet) -> Result<Self, OperatorError> {
        Self::build_with(kernel, nodes, BuildOptions::default())
    }

    pub fn build_with(kernel: &Kernel, nodes: &NodeSet, opts: BuildOptions) -> Result<Self, OperatorError> {
        if nodes.is_empty() {
            return Err(OperatorError::Empty);
        }
        let a = interpolation_matrix(kernel, &nodes.points);
        let a_factor = cholesky(&a)?;
        let g = build_gradient_matrices(kernel, nodes, &a_factor)?;
        let l = opts.laplacian.then(|| build_laplacian(&g));
        let cond = opts.cond_estimate.then(|| cond2_estimate(&a, &a_factor));
        Ok(Self {
            kernel: kernel.clone(),
            nodes: nodes.clone(),
            a,
            a_factor,
            g,
            l,
            cond,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interpolation(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn factor(&self) -> &Factorization {
        &self.a_factor
    }

    pub fn gradient(&self) -> &[DenseMatrix; 3] {
        &self.g
    }

    pub fn gx(&self) -> &DenseMatrix {
        &self.g[0]
    }

    pub fn gy(&self) -> &DenseMatrix {
        &self.g[1]
    }

    pub fn gz(&self) -> &DenseMatrix {
        &self.g[2]
    }

    /// The Laplace–Beltrami matrix, formed on first use if the build skipped it.
    pub fn laplacian(&mut self) -> &DenseMatrix {
        if self.l.is_none() {
            self.l = Some(build_laplacian(&self.g));
        }
        self.l.as_ref().unwrap()
    }

    pub fn laplacian_ref(&self) -> Option<&DenseMatrix> {
        self.l.as_ref()
    }

    pub fn into_laplacian(mut self) -> DenseMatrix {
        self.laplacian();
        self.l.unwrap()
    }

    pub fn cond_estimate(&self) -> Option<f64> {
        self.cond
    }

    pub fn interpolant(&self, f: &[f64]) -> Result<Interpolant, OperatorError> {
        check_len(self.len(), f.len())?;
        Ok(Interpolant {
            kernel: self.kernel.clone(),
            centers: self.nodes.points.clone(),
            coeffs: self.a_factor.solve_vec(f),
        })
    }

    pub fn apply_gradient(&self, f: &[f64]) -> Result<[Vec<f64>; 3], OperatorError> {
        check_len(self.len(), f.len())?;
        Ok([self.g[0].matvec(f), self.g[1].matvec(f), self.g[2].matvec(f)])
    }

    /// `D f = Gx fx + Gy fy + Gz fz`.
    pub fn apply_divergence(&self, fx: &[f64], fy: &[f64], fz: &[f64]) -> Result<Vec<f64>, OperatorError> {
        for f in [fx, fy, fz] {
            check_len(self.len(), f.len())?;
        }
        let mut out = self.g[0].matvec(fx);
        for (gk, fk) in self.g[1..].iter().zip([fy, fz]) {
            let t = gk.matvec(fk);
            out.iter_mut().zip(&t).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }

    pub fn apply_laplacian(&mut self, f: &[f64]) -> Result<Vec<f64>, OperatorError> {
        check_len(self.len(), f.len())?;
        Ok(self.laplacian().matvec(f))
    }
}

/// `I f(x) = sum_j c_j phi(|x - x_j|)`.
#[derive(Clone, Debug)]
pub struct Interpolant {
    pub kernel: Kernel,
    pub centers: Vec<Vec3>,
    pub coeffs: Vec<f64>,
}

impl Interpolant {
    pub fn eval(&self, y: Vec3) -> f64 {
        self.centers
            .iter()
            .zip(&self.coeffs)
            .map(|(&c, &w)| w * self.kernel.phi(vec3::dist(y, c)))
            .sum()
    }
}

/// Coefficients `c` with `A c = f`.
pub fn build_interpolant(k: &Kernel, ns: &NodeSet, f: &[f64]) -> Result<Vec<f64>, OperatorError> {
    check_len(ns.len(), f.len())?;
    let a = interpolation_matrix(k, &ns.points);
    Ok(cholesky(&a)?.solve_vec(f))
}

pub fn eval_interpolant(k: &Kernel, ns: &NodeSet, c: &[f64], y: Vec3) -> f64 {
    ns.points
        .iter()
        .zip(c)
        .map(|(&x, &w)| w * k.phi(vec3::dist(y, x)))
        .sum()
}
