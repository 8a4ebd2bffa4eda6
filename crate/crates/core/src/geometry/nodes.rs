use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridIndex;
use super::surface::{estimate_area, Surface};
use super::vec3::{self, Vec3};
use super::GeometryError;

/// Seeds for the internal Monte-Carlo estimates, so that weights and areas
/// are functions of the node set alone.
const QUAD_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const AREA_SEED: u64 = 0x51_7cc1_b727_220a;
const AREA_SAMPLES: usize = 2_000_000;
const CHUNK: usize = 8192;

/// Scattered nodes on a surface with normals, quadrature weights and
/// quality metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Mesh norm (fill distance) estimate.
    pub h: f64,
    /// Separation radius, half the minimum pairwise distance.
    pub q: f64,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub h: f64,
    pub q: f64,
    pub rho: f64,
}

impl NodeSet {
    /// Fills normals, weights and metrics for points already on `s`.
    pub fn from_points(s: &dyn Surface, points: Vec<Vec3>, seed: u64) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::InvalidArgument("empty node set".into()));
        }
        let normals = normals_for(s, &points)?;
        let weights = quadrature_weights(s, &points);
        let stats = mesh_stats(s, &points, 10 * points.len(), seed);
        Ok(Self {
            points,
            normals,
            weights,
            h: stats.h,
            q: stats.q,
            rho: stats.rho,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[k]).collect()
    }

    pub fn stats(&self) -> MeshStats {
        MeshStats {
            h: self.h,
            q: self.q,
            rho: self.rho,
        }
    }
}

pub fn normal_at(s: &dyn Surface, x: Vec3) -> Result<Vec3, GeometryError> {
    s.normal(x)
}

pub fn project(s: &dyn Surface, x: Vec3) -> Result<Vec3, GeometryError> {
    s.project(x)
}

pub fn normals_for(s: &dyn Surface, points: &[Vec3]) -> Result<Vec<Vec3>, GeometryError> {
    points.iter().map(|&p| s.normal(p)).collect()
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

/// `n` area-uniform points on `s`, reproducible for a given seed regardless
/// of the thread count.
pub fn sample_surface(s: &dyn Surface, n: usize, seed: u64) -> Result<Vec<Vec3>, GeometryError> {
    if n == 0 {
        return Err(GeometryError::InvalidArgument("sample count must be >= 1".into()));
    }
    let chunks: Vec<Result<Vec<Vec3>, GeometryError>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| s.sample_uniform(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Area from the hint, or a fixed-seed Monte-Carlo estimate.
pub fn surface_area(s: &dyn Surface) -> f64 {
    s.area_hint().unwrap_or_else(|| {
        let per = AREA_SAMPLES / 16;
        let total: f64 = (0..16)
            .into_par_iter()
            .map(|c| estimate_area(s, per, &mut chunk_rng(AREA_SEED, c)))
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total / 16.0
    })
}

fn grid_cell(points: &[Vec3]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diag = vec3::dist(lo, hi);
    let cell = diag / (points.len() as f64).sqrt();
    if cell > 0.0 && cell.is_finite() {
        cell
    } else {
        1.0
    }
}

/// Indices kept by greedy first-come thinning at separation `qmin`.
pub fn thin_indices(points: &[Vec3], qmin: f64) -> Vec<usize> {
    assert!(qmin > 0.0);
    let mut grid = GridIndex::empty(qmin);
    let mut kept = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        if !grid.any_within(p, qmin) {
            grid.insert(p);
            kept.push(i);
        }
    }
    kept
}

/// Greedy subset with all pairwise distances `>= qmin`; every dropped point
/// lies within `qmin` of a kept one.
pub fn thin(points: &[Vec3], qmin: f64) -> Vec<Vec3> {
    thin_indices(points, qmin).into_iter().map(|i| points[i]).collect()
}

/// Thins to roughly `target` points by bisection on the separation.
/// The result has at least `target` points when the input does.
pub fn thin_to_count(points: &[Vec3], target: usize) -> Vec<Vec3> {
    if points.len() <= target {
        return points.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 2.0 * grid_cell(points) * (points.len() as f64).sqrt());
    let mut best = points.to_vec();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        let t = thin(points, mid);
        if t.len() >= target {
            lo = mid;
            best = t;
            if best.len() == target {
                break;
            }
        } else {
            hi = mid;
        }
    }
    best
}

/// Removes points from the closest pairs until `target` remain.
pub fn decimate_closest(points: &[Vec3], target: usize) -> Vec<Vec3> {
    let n = points.len();
    if n <= target || n < 2 {
        return points.to_vec();
    }
    let mut grid = GridIndex::new(points, grid_cell(points));
    let mut nn: Vec<(usize, f64)> = (0..n).map(|i| grid.nearest(points[i], Some(i)).unwrap()).collect();
    let mut alive = vec![true; n];
    for _ in 0..(n - target) {
        let (i, _) = (0..n)
            .filter(|&i| alive[i])
            .map(|i| (i, nn[i].1))
            .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        alive[i] = false;
        grid.remove(i);
        for j in 0..n {
            if alive[j] && nn[j].0 == i {
                nn[j] = grid.nearest(points[j], Some(j)).unwrap_or((j, f64::INFINITY));
            }
        }
    }
    (0..n).filter(|&i| alive[i]).map(|i| points[i]).collect()
}

/// Riesz 2-energy `sum_{i<j} |x_i - x_j|^-2`.
pub fn riesz_energy(points: &[Vec3]) -> Result<f64, GeometryError> {
    energy_and_gradient(points).map(|(e, _)| e)
}

fn energy_and_gradient(points: &[Vec3]) -> Result<(f64, Vec<Vec3>), GeometryError> {
    let rows: Vec<Result<(f64, Vec3), GeometryError>> = points
        .par_iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut e = 0.0;
            let mut g = [0.0; 3];
            for (j, &xj) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = vec3::sub(xi, xj);
                let r2 = vec3::dot(d, d);
                if !(r2 > 1e-200) {
                    return Err(GeometryError::CoincidentPoints { i, j });
                }
                let inv = 1.0 / r2;
                e += inv;
                let c = -2.0 * inv * inv;
                g[0] += c * d[0];
                g[1] += c * d[1];
                g[2] += c * d[2];
            }
            Ok((e, g))
        })
        .collect();
    let mut e = 0.0;
    let mut grad = Vec::with_capacity(points.len());
    for r in rows {
        let (ei, gi) = r?;
        e += ei;
        grad.push(gi);
    }
    Ok((0.5 * e, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RieszReport {
    pub points: Vec<Vec3>,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub accepted_steps: usize,
}

/// Projected gradient descent on the Riesz 2-energy with backtracking.
///
/// Each iteration moves every point along its tangential descent direction,
/// scaled so the largest move is `step` times the mean nearest-neighbour
/// spacing, then projects back. Increases are rejected and the step halved;
/// accepted steps grow it by 20%.
pub fn riesz_descend(
    s: &dyn Surface,
    points: Vec<Vec3>,
    iters: usize,
    step: f64,
) -> Result<RieszReport, GeometryError> {
    if !(step > 0.0) {
        return Err(GeometryError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let (mut e, mut g) = energy_and_gradient(&points)?;
    let e0 = e;
    let mut x = points;
    if x.len() < 2 {
        return Ok(RieszReport {
            points: x,
            energy_initial: e0,
            energy_final: e,
            accepted_steps: 0,
        });
    }
    let h0 = {
        let grid = GridIndex::new(&x, grid_cell(&x));
        let sum: f64 = (0..x.len()).map(|i| grid.nearest(x[i], Some(i)).unwrap().1).sum();
        sum / x.len() as f64
    };
    let mut frac = step;
    let max_frac = (4.0 * step).min(0.5);
    let mut accepted = 0;
    for _ in 0..iters {
        let dirs: Vec<Vec3> = x
            .iter()
            .zip(&g)
            .map(|(&p, &gi)| s.normal(p).map(|n| vec3::scale(-1.0, vec3::tangential(n, gi))))
            .collect::<Result<_, _>>()?;
        let dmax = dirs.iter().map(|&d| vec3::norm(d)).fold(0.0, f64::max);
        if !(dmax > 0.0) {
            break;
        }
        let mut moved = false;
        for _ in 0..40 {
            let c = frac * h0 / dmax;
            let trial: Result<Vec<Vec3>, GeometryError> = x
                .par_iter()
                .zip(&dirs)
                .map(|(&p, &d)| s.project(vec3::add(p, vec3::scale(c, d))))
                .collect();
            if let Ok(trial) = trial {
                if let Ok((et, gt)) = energy_and_gradient(&trial) {
                    if et <= e {
                        x = trial;
                        e = et;
                        g = gt;
                        frac = (frac * 1.2).min(max_frac);
                        moved = true;
                        break;
                    }
                }
            }
            frac *= 0.5;
        }
        if !moved {
            break;
        }
        accepted += 1;
    }
    Ok(RieszReport {
        points: x,
        energy_initial: e0,
        energy_final: e,
        accepted_steps: accepted,
    })
}

/// Riesz descent followed by normals, weights and metrics.
pub fn riesz_minimize(
    s: &dyn Surface,
    points: Vec<Vec3>,
    iters: usize,
    step: f64,
) -> Result<NodeSet, GeometryError> {
    let r = riesz_descend(s, points, iters, step)?;
    NodeSet::from_points(s, r.points, 0)
}

/// Half the minimum pairwise distance.
pub fn separation_radius(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return f64::INFINITY;
    }
    let grid = GridIndex::new(points, grid_cell(points));
    0.5 * (0..points.len())
        .into_par_iter()
        .map(|i| grid.nearest(points[i], Some(i)).unwrap().1)
        .reduce(|| f64::INFINITY, f64::min)
}

/// Euclidean mesh metrics: `q` from pairwise distances, `h` as the largest
/// distance from `probe_count` random surface points to their nearest node.
pub fn mesh_stats(s: &dyn Surface, points: &[Vec3], probe_count: usize, seed: u64) -> MeshStats {
    let q = separation_radius(points);
    let grid = GridIndex::new(points, grid_cell(points));
    let h = (0..probe_count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed ^ 0x00c0_ffee, c);
            let len = CHUNK.min(probe_count - c * CHUNK);
            let mut h: f64 = 0.0;
            for _ in 0..len {
                if let Ok(p) = s.sample_uniform(&mut rng) {
                    h = h.max(grid.nearest(p, None).unwrap().1);
                }
            }
            h
        })
        .reduce(|| 0.0, f64::max);
    MeshStats { h, q, rho: h / q }
}

/// Monte-Carlo Voronoi masses from `200 N` uniform surface samples,
/// normalized to sum to the surface area.
pub fn quadrature_weights(s: &dyn Surface, points: &[Vec3]) -> Vec<f64> {
    quadrature_weights_with(s, points, 200 * points.len())
}

pub fn quadrature_weights_with(s: &dyn Surface, points: &[Vec3], samples: usize) -> Vec<f64> {
    let n = points.len();
    let grid = GridIndex::new(points, grid_cell(points));
    let counts = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(QUAD_SEED, c);
            let len = CHUNK.min(samples - c * CHUNK);
            let mut counts = vec![0u64; n];
            for _ in 0..len {
                if let Ok(p) = s.sample_uniform(&mut rng) {
                    counts[grid.nearest(p, None).unwrap().0] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total: u64 = counts.iter().sum();
    let area = surface_area(s);
    counts.iter().map(|&c| area * c as f64 / total.max(1) as f64).collect()
}

/// Stages of the node generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeOptions {
    /// Random candidates per requested node.
    pub oversample: f64,
    /// Thinning target per requested node.
    pub thin_ratio: f64,
    pub pre_iters: usize,
    pub post_iters: usize,
    pub step: f64,
}

impl Default for NodeOptions {
    fn default() -> Self {
        Self {
            oversample: 3.0,
            thin_ratio: 1.2,
            pre_iters: 100,
            post_iters: 200,
            step: 0.1,
        }
    }
}

/// Quasi-uniform nodes: random samples, thinned, Riesz-relaxed, decimated
/// to exactly `n` by dropping closest pairs, relaxed again.
pub fn generate_nodes(s: &dyn Surface, n: usize, seed: u64) -> Result<NodeSet, GeometryError> {
    generate_nodes_with(s, n, seed, &NodeOptions::default())
}

pub fn generate_nodes_with(
    s: &dyn Surface,
    n: usize,
    seed: u64,
    opts: &NodeOptions,
) -> Result<NodeSet, GeometryError> {
    if n == 0 {
        return Err(GeometryError::InvalidArgument("node count must be >= 1".into()));
    }
    let m = ((n as f64) * opts.oversample.max(1.0)).ceil() as usize;
    let raw = sample_surface(s, m, seed)?;
    let target = ((n as f64) * opts.thin_ratio.max(1.0)).ceil() as usize;
    let thinned = thin_to_count(&raw, target);
    let relaxed = riesz_descend(s, thinned, opts.pre_iters, opts.step)?.points;
    let exact = decimate_closest(&relaxed, n);
    if exact.len() != n {
        return Err(GeometryError::SamplingExhausted { accepted: exact.len() });
    }
    let fin = riesz_descend(s, exact, opts.post_iters, opts.step)?.points;
    NodeSet::from_points(s, fin, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{surface_by_name, Torus, UnitSphere};

    #[test]
    fn thin_keeps_separation_and_covers() {
        let pts = sample_surface(&UnitSphere, 2000, 4).unwrap();
        let q = 0.1;
        let kept = thin(&pts, q);
        for i in 0..kept.len() {
            for j in 0..i {
                assert!(vec3::dist(kept[i], kept[j]) >= q);
            }
        }
        for p in &pts {
            assert!(kept.iter().any(|k| vec3::dist(*k, *p) < q) || kept.contains(p));
        }
        assert_eq!(thin(&[[0.0; 3], [0.0; 3]], 0.5).len(), 1);
        let spread = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(thin(&spread, 0.5), spread);
    }

    #[test]
    fn sampling_is_deterministic_and_on_surface() {
        let a = sample_surface(&UnitSphere, 100, 1).unwrap();
        assert_eq!(a, sample_surface(&UnitSphere, 100, 1).unwrap());
        assert!(a.iter().all(|p| (vec3::norm(*p) - 1.0).abs() < 1e-10));
        let t = sample_surface(&Torus, 1000, 2).unwrap();
        let outer = t.iter().filter(|p| p[0].hypot(p[1]) > 1.0).count() as f64 / 1000.0;
        assert!(outer > 0.5 && outer < 0.9, "{outer}");
    }

    #[test]
    fn two_points_go_antipodal() {
        let pts = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let r = riesz_descend(&UnitSphere, pts, 200, 0.1).unwrap();
        assert!((r.energy_final - 0.25).abs() < 1e-6, "{}", r.energy_final);
    }

    #[test]
    fn six_points_form_octahedron() {
        let pts = sample_surface(&UnitSphere, 6, 9).unwrap();
        let r = riesz_descend(&UnitSphere, pts, 500, 0.1).unwrap();
        assert!(r.energy_final <= r.energy_initial);
        let dmin = 2.0 * separation_radius(&r.points);
        assert!((dmin / 2f64.sqrt() - 1.0).abs() < 0.05, "{dmin}");
    }

    #[test]
    fn decimation_hits_target() {
        let pts = sample_surface(&UnitSphere, 300, 3).unwrap();
        let d = decimate_closest(&pts, 200);
        assert_eq!(d.len(), 200);
        assert!(separation_radius(&d) >= separation_radius(&pts));
    }

    #[test]
    fn generated_sphere_nodes_are_quasi_uniform() {
        let ns = generate_nodes(&UnitSphere, 400, 7).unwrap();
        assert_eq!(ns.len(), 400);
        assert!(ns.rho < 2.5, "rho = {}", ns.rho);
        let sum: f64 = ns.weights.iter().sum();
        assert!((sum - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        for (p, n) in ns.points.iter().zip(&ns.normals) {
            assert!((vec3::norm(*p) - 1.0).abs() < 1e-12);
            assert!((vec3::norm(*n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bretzel2_area_estimate_is_stable() {
        let s = surface_by_name("bretzel2").unwrap();
        let a = surface_area(s.as_ref());
        let b = estimate_area(s.as_ref(), 1_000_000, &mut ChaCha8Rng::seed_from_u64(99));
        assert!((a / b - 1.0).abs() < 0.02, "{a} {b}");
    }
}
