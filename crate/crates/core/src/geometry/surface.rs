//! Implicit surfaces `F(x) = 0` with `F < 0` on the bounded side, so that
//! `grad F / |grad F|` is the outward normal.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::vec3::{self, Vec3};
use super::GeometryError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn diagonal(&self) -> f64 {
        vec3::dist(self.min, self.max)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }

    pub fn inflate(&self, by: f64) -> Aabb {
        Aabb {
            min: self.min.map(|v| v - by),
            max: self.max.map(|v| v + by),
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec3 {
        let mut x = [0.0; 3];
        for k in 0..3 {
            x[k] = self.min[k] + (self.max[k] - self.min[k]) * rng.gen::<f64>();
        }
        x
    }
}

const MAX_NEWTON: usize = 100;

pub trait Surface: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn value(&self, x: Vec3) -> f64;

    fn gradient(&self, x: Vec3) -> Vec3;

    /// Axis-aligned box containing the surface.
    fn bbox(&self) -> Aabb;

    /// Exact or high-accuracy area, when one is known.
    fn area_hint(&self) -> Option<f64> {
        None
    }

    fn normal(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        let g = self.gradient(x);
        let gn = vec3::norm(g);
        if !(gn >= 1e-12) {
            return Err(GeometryError::GradientVanishes { point: x });
        }
        Ok(vec3::scale(1.0 / gn, g))
    }

    /// Distance proxy `|F| / |grad F|`.
    fn residual_distance(&self, x: Vec3) -> f64 {
        self.value(x).abs() / vec3::norm(self.gradient(x)).max(f64::MIN_POSITIVE)
    }

    fn project(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        newton_project(self, x)
    }

    /// One point distributed uniformly with respect to surface area.
    fn sample_uniform(&self, rng: &mut dyn RngCore) -> Result<Vec3, GeometryError> {
        shell_sample(self, rng)
    }
}

pub type SurfaceRef = Arc<dyn Surface>;

/// Damped Newton iteration `y <- y - F grad F / |grad F|^2` with the step
/// capped at a tenth of the bounding-box diagonal.
pub fn newton_project<S: Surface + ?Sized>(s: &S, x: Vec3) -> Result<Vec3, GeometryError> {
    let diag = s.bbox().diagonal();
    let tol = 1e-14 * diag;
    let mut y = x;
    let mut last = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let f = s.value(y);
        let g = s.gradient(y);
        let g2 = vec3::dot(g, g);
        if !(g2 > 1e-24) {
            return Err(GeometryError::GradientVanishes { point: y });
        }
        let mut step = vec3::scale(f / g2, g);
        let len = vec3::norm(step);
        if len > 0.1 * diag {
            step = vec3::scale(0.1 * diag / len, step);
        }
        y = vec3::sub(y, step);
        last = len;
        if len <= tol {
            return Ok(y);
        }
    }
    Err(GeometryError::NoConvergence {
        iterations: MAX_NEWTON,
        residual: last,
    })
}

/// Rejection sampler on the shell `|F| / |grad F| < delta`, followed by
/// projection. Uniform to first order in `delta`.
pub fn shell_sample<S: Surface + ?Sized>(
    s: &S,
    rng: &mut dyn RngCore,
) -> Result<Vec3, GeometryError> {
    let bb = s.bbox();
    let delta = shell_width(&bb);
    let bb = bb.inflate(2.0 * delta);
    for _ in 0..10_000_000usize {
        let x = bb.sample(rng);
        if s.residual_distance(x) < delta {
            if let Ok(y) = s.project(x) {
                return Ok(y);
            }
        }
    }
    Err(GeometryError::SamplingExhausted { accepted: 0 })
}

pub(crate) fn shell_width(bb: &Aabb) -> f64 {
    2e-3 * bb.diagonal()
}

/// Monte-Carlo area from the volume fraction of the thin shell around the
/// surface.
pub fn estimate_area(s: &dyn Surface, samples: usize, rng: &mut dyn RngCore) -> f64 {
    let bb0 = s.bbox();
    let delta = shell_width(&bb0);
    let bb = bb0.inflate(2.0 * delta);
    let hits = (0..samples)
        .filter(|_| s.residual_distance(bb.sample(rng)) < delta)
        .count();
    hits as f64 / samples as f64 * bb.volume() / (2.0 * delta)
}

/// `x^2 + y^2 + z^2 = 1`.
#[derive(Clone, Debug, Default)]
pub struct UnitSphere;

impl Surface for UnitSphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn value(&self, x: Vec3) -> f64 {
        vec3::dot(x, x) - 1.0
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        vec3::scale(2.0, x)
    }

    fn bbox(&self) -> Aabb {
        Aabb {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }

    fn area_hint(&self) -> Option<f64> {
        Some(4.0 * PI)
    }

    fn normal(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        let r = vec3::norm(x);
        if r < 1e-12 {
            return Err(GeometryError::GradientVanishes { point: x });
        }
        Ok(vec3::scale(1.0 / r, x))
    }

    fn project(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        self.normal(x)
    }

    fn sample_uniform(&self, rng: &mut dyn RngCore) -> Result<Vec3, GeometryError> {
        loop {
            let x = [
                2.0 * rng.gen::<f64>() - 1.0,
                2.0 * rng.gen::<f64>() - 1.0,
                2.0 * rng.gen::<f64>() - 1.0,
            ];
            let r2 = vec3::dot(x, x);
            if r2 > 1e-6 && r2 <= 1.0 {
                return Ok(vec3::scale(1.0 / r2.sqrt(), x));
            }
        }
    }
}

/// Ring torus `(1 - rho)^2 + z^2 = 1/9`.
#[derive(Clone, Debug, Default)]
pub struct Torus;

const TORUS_R: f64 = 1.0;
const TORUS_A: f64 = 1.0 / 3.0;

impl Surface for Torus {
    fn name(&self) -> &str {
        "torus"
    }

    fn value(&self, x: Vec3) -> f64 {
        let rho = x[0].hypot(x[1]);
        (TORUS_R - rho).powi(2) + x[2] * x[2] - TORUS_A * TORUS_A
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let rho = x[0].hypot(x[1]);
        if rho == 0.0 {
            return [0.0, 0.0, 2.0 * x[2]];
        }
        let c = -2.0 * (TORUS_R - rho) / rho;
        [c * x[0], c * x[1], 2.0 * x[2]]
    }

    fn bbox(&self) -> Aabb {
        let r = TORUS_R + TORUS_A;
        Aabb {
            min: [-r, -r, -TORUS_A],
            max: [r, r, TORUS_A],
        }
    }

    fn area_hint(&self) -> Option<f64> {
        Some(4.0 * PI * PI * TORUS_R * TORUS_A)
    }

    /// Closest point on the tube circle, then radially onto the tube.
    fn project(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        let rho = x[0].hypot(x[1]);
        if rho < 1e-12 {
            return Err(GeometryError::GradientVanishes { point: x });
        }
        let (c, s) = (x[0] / rho, x[1] / rho);
        let dr = rho - TORUS_R;
        let d = dr.hypot(x[2]);
        if d < 1e-12 {
            return Err(GeometryError::GradientVanishes { point: x });
        }
        let r = TORUS_R + TORUS_A * dr / d;
        Ok([r * c, r * s, TORUS_A * x[2] / d])
    }

    fn sample_uniform(&self, rng: &mut dyn RngCore) -> Result<Vec3, GeometryError> {
        let ratio = TORUS_A / TORUS_R;
        loop {
            let u = 2.0 * PI * rng.gen::<f64>();
            let v = 2.0 * PI * rng.gen::<f64>();
            let w = rng.gen::<f64>() * (1.0 + ratio);
            if w <= 1.0 + ratio * v.cos() {
                let r = TORUS_R + TORUS_A * v.cos();
                return Ok([r * u.cos(), r * u.sin(), TORUS_A * v.sin()]);
            }
        }
    }
}

/// Biconcave red blood cell. Parametrically
/// `x = r0 cos(l) cos(t)`, `y = r0 sin(l) cos(t)`,
/// `z = sin(t) (c0 + c2 cos^2 t + c4 cos^4 t) / 2`.
/// With `s = (x^2 + y^2) / r0^2 = cos^2 t` it is the zero set of
/// `F = z^2 - (1 - s) g(s)^2 / 4`, `g(s) = c0 + c2 s + c4 s^2`, which has a
/// nonvanishing gradient on the cell. Projection works in the meridian
/// plane on the parametric curve so that it never lands on the spurious
/// zero circle of `F` at `g(s) = 0` outside the cell.
#[derive(Clone, Debug)]
pub struct RedBloodCell {
    area: f64,
    wmax: f64,
}

const RBC_R0: f64 = 3.91 / 3.39;
const RBC_C0: f64 = 0.81 / 3.39;
const RBC_C2: f64 = 7.83 / 3.39;
const RBC_C4: f64 = -4.39 / 3.39;

impl Default for RedBloodCell {
    fn default() -> Self {
        Self::new()
    }
}

impl RedBloodCell {
    pub fn new() -> Self {
        // composite Simpson on the area element in the meridian angle
        let n = 20_000;
        let h = PI / n as f64;
        let mut acc = 0.0;
        let mut wmax: f64 = 0.0;
        for k in 0..=n {
            let t = -PI / 2.0 + k as f64 * h;
            let w = Self::area_element(t);
            wmax = wmax.max(w);
            let c = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += c * w;
        }
        Self {
            area: 2.0 * PI * acc * h / 3.0,
            wmax: 1.05 * wmax,
        }
    }

    fn g(s: f64) -> f64 {
        RBC_C0 + RBC_C2 * s + RBC_C4 * s * s
    }

    fn dg(s: f64) -> f64 {
        RBC_C2 + 2.0 * RBC_C4 * s
    }

    /// Point `(rho, z)` of the meridian curve.
    fn meridian(t: f64) -> (f64, f64) {
        let c = t.cos();
        (RBC_R0 * c, 0.5 * t.sin() * Self::g(c * c))
    }

    fn meridian_tangent(t: f64) -> (f64, f64) {
        let (s, c) = t.sin_cos();
        let dz = 0.5 * (c * Self::g(c * c) - 2.0 * s * s * c * Self::dg(c * c));
        (-RBC_R0 * s, dz)
    }

    /// `rho |c'(t)|`, the area element per unit `dt dl`.
    fn area_element(t: f64) -> f64 {
        let (rho, _) = Self::meridian(t);
        let (a, b) = Self::meridian_tangent(t);
        rho * a.hypot(b)
    }
}

impl Surface for RedBloodCell {
    fn name(&self) -> &str {
        "rbc"
    }

    fn value(&self, x: Vec3) -> f64 {
        let s = (x[0] * x[0] + x[1] * x[1]) / (RBC_R0 * RBC_R0);
        let g = Self::g(s);
        x[2] * x[2] - 0.25 * (1.0 - s) * g * g
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let s = (x[0] * x[0] + x[1] * x[1]) / (RBC_R0 * RBC_R0);
        let g = Self::g(s);
        let dfds = 0.25 * g * g - 0.5 * (1.0 - s) * g * Self::dg(s);
        let c = dfds * 2.0 / (RBC_R0 * RBC_R0);
        [c * x[0], c * x[1], 2.0 * x[2]]
    }

    fn bbox(&self) -> Aabb {
        Aabb {
            min: [-RBC_R0, -RBC_R0, -0.38],
            max: [RBC_R0, RBC_R0, 0.38],
        }
    }

    fn area_hint(&self) -> Option<f64> {
        Some(self.area)
    }

    fn project(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        let rho = x[0].hypot(x[1]);
        let (c, s) = if rho > 0.0 {
            (x[0] / rho, x[1] / rho)
        } else {
            (1.0, 0.0)
        };
        let d2 = |t: f64| {
            let (r, z) = Self::meridian(t);
            (r - rho).powi(2) + (z - x[2]).powi(2)
        };
        const GRID: usize = 128;
        let h = PI / GRID as f64;
        let best = (0..=GRID)
            .map(|k| -PI / 2.0 + k as f64 * h)
            .min_by(|a, b| d2(*a).total_cmp(&d2(*b)))
            .unwrap();
        // golden-section refinement on the bracketing cell pair
        let (mut a, mut b) = ((best - h).max(-PI / 2.0), (best + h).min(PI / 2.0));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut t1 = b - phi * (b - a);
        let mut t2 = a + phi * (b - a);
        let (mut f1, mut f2) = (d2(t1), d2(t2));
        for _ in 0..64 {
            if f1 < f2 {
                b = t2;
                t2 = t1;
                f2 = f1;
                t1 = b - phi * (b - a);
                f1 = d2(t1);
            } else {
                a = t1;
                t1 = t2;
                f1 = f2;
                t2 = a + phi * (b - a);
                f2 = d2(t2);
            }
        }
        let t = 0.5 * (a + b);
        let (r, z) = Self::meridian(t);
        let y = [r * c, r * s, z];
        // the parametric point is on the surface up to rounding; polish it
        // against the implicit form so residual checks are tight
        let mut y = y;
        for _ in 0..3 {
            let f = self.value(y);
            let g = self.gradient(y);
            let g2 = vec3::dot(g, g);
            if g2 < 1e-24 {
                break;
            }
            y = vec3::sub(y, vec3::scale(f / g2, g));
        }
        Ok(y)
    }

    fn sample_uniform(&self, rng: &mut dyn RngCore) -> Result<Vec3, GeometryError> {
        loop {
            let t = -PI / 2.0 + PI * rng.gen::<f64>();
            let l = 2.0 * PI * rng.gen::<f64>();
            if rng.gen::<f64>() * self.wmax <= Self::area_element(t) {
                let (r, z) = Self::meridian(t);
                return Ok([r * l.cos(), r * l.sin(), z]);
            }
        }
    }
}

/// Dupin's cyclide
/// `(x^2 + y^2 + z^2 - d^2 + b^2)^2 - 4 (a x + c d)^2 - 4 b^2 y^2 = 0`
/// with `a = 2`, `b = 1.9`, `d = 1`, `c^2 = a^2 - b^2`.
#[derive(Clone, Debug, Default)]
pub struct DupinCyclide;

const CYC_A: f64 = 2.0;
const CYC_B: f64 = 1.9;
const CYC_D: f64 = 1.0;

fn cyc_c() -> f64 {
    (CYC_A * CYC_A - CYC_B * CYC_B).sqrt()
}

impl Surface for DupinCyclide {
    fn name(&self) -> &str {
        "cyclide"
    }

    fn value(&self, x: Vec3) -> f64 {
        let q = vec3::dot(x, x) - CYC_D * CYC_D + CYC_B * CYC_B;
        let l = CYC_A * x[0] + cyc_c() * CYC_D;
        q * q - 4.0 * l * l - 4.0 * CYC_B * CYC_B * x[1] * x[1]
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let q = vec3::dot(x, x) - CYC_D * CYC_D + CYC_B * CYC_B;
        let l = CYC_A * x[0] + cyc_c() * CYC_D;
        [
            4.0 * q * x[0] - 8.0 * CYC_A * l,
            4.0 * q * x[1] - 8.0 * CYC_B * CYC_B * x[1],
            4.0 * q * x[2],
        ]
    }

    fn bbox(&self) -> Aabb {
        Aabb {
            min: [-2.45, -3.05, -1.7],
            max: [3.7, 3.05, 1.7],
        }
    }
}

/// Bretzel2 `(x^2 (1 - x^2) - y^2)^2 + z^2 / 2 = 1/40`, a genus-2 surface.
#[derive(Clone, Debug, Default)]
pub struct Bretzel2;

impl Surface for Bretzel2 {
    fn name(&self) -> &str {
        "bretzel2"
    }

    fn value(&self, x: Vec3) -> f64 {
        let p = x[0] * x[0] * (1.0 - x[0] * x[0]) - x[1] * x[1];
        p * p + 0.5 * x[2] * x[2] - 1.0 / 40.0
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let p = x[0] * x[0] * (1.0 - x[0] * x[0]) - x[1] * x[1];
        [
            2.0 * p * (2.0 * x[0] - 4.0 * x[0].powi(3)),
            -4.0 * p * x[1],
            x[2],
        ]
    }

    fn bbox(&self) -> Aabb {
        Aabb {
            min: [-1.1, -0.66, -0.23],
            max: [1.1, 0.66, 0.23],
        }
    }
}

pub type SurfaceBuilder = fn() -> SurfaceRef;

/// Name-keyed surface constructors.
#[derive(Clone, Default)]
pub struct SurfaceRegistry {
    builders: BTreeMap<String, SurfaceBuilder>,
}

impl SurfaceRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self::default();
        r.register("sphere", || Arc::new(UnitSphere));
        r.register("torus", || Arc::new(Torus));
        r.register("rbc", || Arc::new(RedBloodCell::new()));
        r.register("cyclide", || Arc::new(DupinCyclide));
        r.register("bretzel2", || Arc::new(Bretzel2));
        r
    }

    pub fn register(&mut self, name: &str, build: SurfaceBuilder) {
        self.builders.insert(name.to_string(), build);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<SurfaceRef, GeometryError> {
        self.builders
            .get(name)
            .map(|b| b())
            .ok_or_else(|| GeometryError::UnknownSurface(name.to_string()))
    }
}

/// Looks up a built-in surface by its CLI name.
pub fn surface_by_name(name: &str) -> Result<SurfaceRef, GeometryError> {
    SurfaceRegistry::with_builtins().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_gradient(s: &dyn Surface, x: Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = [0.0; 3];
        for k in 0..3 {
            let (mut a, mut b) = (x, x);
            a[k] += h;
            b[k] -= h;
            g[k] = (s.value(a) - s.value(b)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in SurfaceRegistry::with_builtins().names().map(|n| surface_by_name(n).unwrap()) {
            for _ in 0..20 {
                let x = s.bbox().sample(&mut rng);
                let g = s.gradient(x);
                let fd = fd_gradient(s.as_ref(), x);
                let scale = vec3::norm(g).max(1.0);
                for k in 0..3 {
                    assert!((g[k] - fd[k]).abs() < 1e-6 * scale, "{} {x:?}", s.name());
                }
            }
        }
    }

    #[test]
    fn samples_lie_on_surface_inside_bbox_with_outward_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in SurfaceRegistry::with_builtins().names().map(|n| surface_by_name(n).unwrap()) {
            let diag = s.bbox().diagonal();
            for _ in 0..300 {
                let x = s.sample_uniform(&mut rng).unwrap();
                assert!(s.value(x).abs() <= 1e-10 * diag, "{} {x:?}", s.name());
                assert!(s.bbox().contains(x), "{} {x:?}", s.name());
                let n = s.normal(x).unwrap();
                let out = s.value(vec3::add(x, vec3::scale(1e-3 * diag, n)));
                let inn = s.value(vec3::sub(x, vec3::scale(1e-3 * diag, n)));
                assert!(out > 0.0 && inn < 0.0, "{}", s.name());
            }
        }
    }

    #[test]
    fn torus_outer_equator_normal() {
        let n = Torus.normal([4.0 / 3.0, 0.0, 0.0]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-15 && n[1] == 0.0 && n[2] == 0.0);
    }

    #[test]
    fn newton_and_closed_form_projection_agree_on_torus() {
        let x = [1.0, 0.0, 0.001];
        let a = Torus.project(x).unwrap();
        let b = newton_project(&Torus, x).unwrap();
        assert!(Torus.value(a).abs() < 1e-12);
        assert!(Torus.value(b).abs() < 1e-12);
        assert!(vec3::dist(a, b) < 1e-10);
    }

    #[test]
    fn rbc_area_and_extent() {
        let s = RedBloodCell::new();
        let a = s.area_hint().unwrap();
        assert!((a - 11.668).abs() < 0.01, "{a}");
        let (_, zmax) = (0..2000)
            .map(|k| RedBloodCell::meridian(-PI / 2.0 + PI * k as f64 / 1999.0))
            .fold((0.0, 0.0f64), |acc, (r, z)| (r, acc.1.max(z.abs())));
        assert!(zmax < 0.38 && zmax > 0.37);
    }

    #[test]
    fn rbc_projection_is_nearest_on_meridian() {
        let s = RedBloodCell::new();
        let p = [0.5, 0.2, 0.4];
        let y = s.project(p).unwrap();
        assert!(s.value(y).abs() < 1e-14);
        let d = vec3::dist(p, y);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5000 {
            let q = s.sample_uniform(&mut rng).unwrap();
            assert!(vec3::dist(p, q) >= d - 1e-12);
        }
    }

    #[test]
    fn shell_area_estimate_matches_known_areas() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in [surface_by_name("torus").unwrap(), surface_by_name("rbc").unwrap()] {
            let a = estimate_area(s.as_ref(), 400_000, &mut rng);
            let exact = s.area_hint().unwrap();
            assert!((a / exact - 1.0).abs() < 0.03, "{} {a} {exact}", s.name());
        }
    }

    #[test]
    fn unknown_surface_rejected() {
        assert!(matches!(
            surface_by_name("klein"),
            Err(GeometryError::UnknownSurface(_))
        ));
    }
}
