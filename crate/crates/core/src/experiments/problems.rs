//! Manufactured solutions for forced diffusion `u_t = Lap_M u + f`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExperimentError;
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::{Surface, UnitSphere};

/// Angular distance below which the sphere forcing is refused.
pub const CENTER_GUARD: f64 = 1e-6;
pub const SPHERE_CENTER_COUNT: usize = 23;

/// A known solution with its surface Laplacian.
pub trait TestProblem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Name of the surface the solution lives on.
    fn surface(&self) -> &str;

    fn solution(&self, t: f64, x: Vec3) -> f64;

    fn time_derivative(&self, t: f64, x: Vec3) -> f64;

    fn laplacian(&self, t: f64, x: Vec3) -> Result<f64, ExperimentError>;

    /// `f = u_t - Lap_M u` for unit diffusivity.
    fn forcing(&self, t: f64, x: Vec3) -> Result<f64, ExperimentError> {
        Ok(self.time_derivative(t, x) - self.laplacian(t, x)?)
    }
}

pub type ProblemRef = Arc<dyn TestProblem>;

/// Uniform random centres on the unit sphere.
pub fn sphere_centers(seed: u64, count: usize) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| UnitSphere.sample_uniform(&mut rng).expect("sphere sampler is total"))
        .collect()
}

fn angle(c: Vec3, x: Vec3) -> f64 {
    vec3::dot(c, x).clamp(-1.0, 1.0).acos()
}

/// `u = e^{-5t} sum_k e^{-10 theta_k}`, `theta_k` the angle to centre `k`.
pub fn sphere_solution(t: f64, x: Vec3, centers: &[Vec3]) -> f64 {
    (-5.0 * t).exp() * centers.iter().map(|&c| (-10.0 * angle(c, x)).exp()).sum::<f64>()
}

/// `Lap e^{-10 theta} = (100 - 10 cot theta) e^{-10 theta}` per centre.
pub fn sphere_laplacian(t: f64, x: Vec3, centers: &[Vec3]) -> Result<f64, ExperimentError> {
    let mut acc = 0.0;
    for &c in centers {
        let th = angle(c, x);
        if th < CENTER_GUARD || PI - th < CENTER_GUARD {
            return Err(ExperimentError::NearCenter { theta: th });
        }
        acc += (100.0 - 10.0 / th.tan()) * (-10.0 * th).exp();
    }
    Ok((-5.0 * t).exp() * acc)
}

pub fn sphere_forcing(t: f64, x: Vec3, centers: &[Vec3]) -> Result<f64, ExperimentError> {
    Ok(-5.0 * sphere_solution(t, x, centers) - sphere_laplacian(t, x, centers)?)
}

fn torus_harmonic(x: Vec3) -> f64 {
    let (x2, y2) = (x[0] * x[0], x[1] * x[1]);
    x[0] * (x2 * x2 - 10.0 * x2 * y2 + 5.0 * y2 * y2)
}

/// `u = e^{-5t} x (x^4 - 10 x^2 y^2 + 5 y^4)(x^2 + y^2 - 60 z^2) / 8`.
pub fn torus_solution(t: f64, x: Vec3) -> f64 {
    let rho2 = x[0] * x[0] + x[1] * x[1];
    0.125 * (-5.0 * t).exp() * torus_harmonic(x) * (rho2 - 60.0 * x[2] * x[2])
}

/// Closed-form surface Laplacian of [`torus_solution`] on the torus.
pub fn torus_laplacian(t: f64, x: Vec3) -> f64 {
    let rho = x[0].hypot(x[1]);
    let poly = (((10248.0 * rho - 34335.0) * rho + 41359.0) * rho - 21320.0) * rho + 4000.0;
    -3.0 / (8.0 * rho * rho) * (-5.0 * t).exp() * torus_harmonic(x) * poly
}

pub fn torus_forcing(t: f64, x: Vec3) -> f64 {
    -5.0 * torus_solution(t, x) - torus_laplacian(t, x)
}

#[derive(Clone, Debug)]
pub struct SphereGaussians {
    pub centers: Vec<Vec3>,
}

impl SphereGaussians {
    pub fn seeded(seed: u64) -> Self {
        Self {
            centers: sphere_centers(seed, SPHERE_CENTER_COUNT),
        }
    }
}

impl TestProblem for SphereGaussians {
    fn name(&self) -> &str {
        "sphere-gaussians"
    }

    fn surface(&self) -> &str {
        "sphere"
    }

    fn solution(&self, t: f64, x: Vec3) -> f64 {
        sphere_solution(t, x, &self.centers)
    }

    fn time_derivative(&self, t: f64, x: Vec3) -> f64 {
        -5.0 * self.solution(t, x)
    }

    fn laplacian(&self, t: f64, x: Vec3) -> Result<f64, ExperimentError> {
        sphere_laplacian(t, x, &self.centers)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TorusPolynomial;

impl TestProblem for TorusPolynomial {
    fn name(&self) -> &str {
        "torus-polynomial"
    }

    fn surface(&self) -> &str {
        "torus"
    }

    fn solution(&self, t: f64, x: Vec3) -> f64 {
        torus_solution(t, x)
    }

    fn time_derivative(&self, t: f64, x: Vec3) -> f64 {
        -5.0 * torus_solution(t, x)
    }

    fn laplacian(&self, t: f64, x: Vec3) -> Result<f64, ExperimentError> {
        Ok(torus_laplacian(t, x))
    }
}

/// `u = e^{-2t} z`, an eigenfunction of the sphere Laplacian; no forcing.
#[derive(Clone, Debug, Default)]
pub struct SphereHarmonic;

impl TestProblem for SphereHarmonic {
    fn name(&self) -> &str {
        "sphere-harmonic"
    }

    fn surface(&self) -> &str {
        "sphere"
    }

    fn solution(&self, t: f64, x: Vec3) -> f64 {
        (-2.0 * t).exp() * x[2]
    }

    fn time_derivative(&self, t: f64, x: Vec3) -> f64 {
        -2.0 * self.solution(t, x)
    }

    fn laplacian(&self, t: f64, x: Vec3) -> Result<f64, ExperimentError> {
        Ok(-2.0 * self.solution(t, x))
    }
}

pub type ProblemBuilder = fn(u64) -> ProblemRef;

/// Name-keyed test problems; builders take the seed used for any random
/// problem data.
#[derive(Clone, Default)]
pub struct ProblemRegistry {
    builders: BTreeMap<String, ProblemBuilder>,
}

impl ProblemRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self::default();
        r.register("sphere-gaussians", |seed| Arc::new(SphereGaussians::seeded(seed)));
        r.register("torus-polynomial", |_| Arc::new(TorusPolynomial));
        r.register("sphere-harmonic", |_| Arc::new(SphereHarmonic));
        r
    }

    pub fn register(&mut self, name: &str, build: ProblemBuilder) {
        self.builders.insert(name.to_string(), build);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str, seed: u64) -> Result<ProblemRef, ExperimentError> {
        self.builders
            .get(name)
            .map(|b| b(seed))
            .ok_or_else(|| ExperimentError::InvalidArgument(format!("unknown problem `{name}`")))
    }

    /// The default problem for a surface, if there is one.
    pub fn for_surface(&self, surface: &str, seed: u64) -> Result<ProblemRef, ExperimentError> {
        match surface {
            "sphere" => self.get("sphere-gaussians", seed),
            "torus" => self.get("torus-polynomial", seed),
            other => Err(ExperimentError::InvalidArgument(format!(
                "no analytic test problem on `{other}`"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Surface, Torus};

    /// `Lap_M f = Lap f - n^T H n - (div n)(n . grad f)` with every ambient
    /// derivative taken by central differences.
    fn fd_surface_laplacian(s: &dyn Surface, f: &dyn Fn(Vec3) -> f64, x: Vec3) -> f64 {
        let h = 1e-4;
        let e = |k: usize, d: f64| {
            let mut y = x;
            y[k] += d;
            y
        };
        let n = s.normal(x).unwrap();
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        let mut div_n = 0.0;
        for a in 0..3 {
            grad[a] = (f(e(a, h)) - f(e(a, -h))) / (2.0 * h);
            div_n += (s.normal(e(a, h)).unwrap()[a] - s.normal(e(a, -h)).unwrap()[a]) / (2.0 * h);
            for b in 0..3 {
                let mut pp = x;
                let mut pm = x;
                let mut mp = x;
                let mut mm = x;
                pp[a] += h;
                pp[b] += h;
                pm[a] += h;
                pm[b] -= h;
                mp[a] -= h;
                mp[b] += h;
                mm[a] -= h;
                mm[b] -= h;
                hess[a][b] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
            }
        }
        let lap = hess[0][0] + hess[1][1] + hess[2][2];
        let nhn: f64 = (0..3).map(|a| (0..3).map(|b| n[a] * hess[a][b] * n[b]).sum::<f64>()).sum();
        lap - nhn - div_n * vec3::dot(n, grad)
    }

    #[test]
    fn torus_laplacian_matches_fd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..25 {
            let x = Torus.sample_uniform(&mut rng).unwrap();
            let exact = torus_laplacian(0.0, x);
            let fd = fd_surface_laplacian(&Torus, &|y| torus_solution(0.0, y), x);
            assert!((exact - fd).abs() < 1e-5 * exact.abs().max(1.0), "{exact} {fd}");
        }
    }

    #[test]
    fn sphere_laplacian_matches_fd_oracle() {
        let p = SphereGaussians::seeded(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let x = UnitSphere.sample_uniform(&mut rng).unwrap();
            let exact = p.laplacian(0.0, x).unwrap();
            // extend radially so the ambient function is smooth near the sphere
            let f = |y: Vec3| p.solution(0.0, vec3::scale(1.0 / vec3::norm(y), y));
            let fd = fd_surface_laplacian(&UnitSphere, &f, x);
            assert!((exact - fd).abs() < 1e-4 * exact.abs().max(1.0), "{exact} {fd}");
        }
    }

    #[test]
    fn torus_solution_values() {
        let x = [4.0 / 3.0, 0.0, 0.0];
        let expected = 0.125 * (4.0f64 / 3.0).powi(5) * (16.0 / 9.0);
        assert!((torus_solution(0.0, x) - expected).abs() < 1e-15);
        let y = [0.3, 0.8, 0.2];
        assert_eq!(torus_solution(0.0, y), torus_solution(0.0, [0.3, -0.8, 0.2]));
    }

    #[test]
    fn sphere_solution_basics() {
        let c = vec![[0.0, 0.0, 1.0]];
        assert_eq!(sphere_solution(0.0, [0.0, 0.0, 1.0], &c), 1.0);
        let x = [0.6, 0.0, 0.8];
        let r = sphere_solution(0.3, x, &c) / sphere_solution(0.0, x, &c);
        assert!((r - (-1.5f64).exp()).abs() < 1e-15);
        assert!(matches!(
            sphere_forcing(0.0, [0.0, 0.0, 1.0], &c),
            Err(ExperimentError::NearCenter { .. })
        ));
        assert!(matches!(
            sphere_laplacian(0.0, [0.0, 0.0, -1.0], &c),
            Err(ExperimentError::NearCenter { .. })
        ));
    }

    #[test]
    fn centers_are_reproducible_unit_vectors() {
        let a = sphere_centers(5, 23);
        assert_eq!(a, sphere_centers(5, 23));
        assert!(a.iter().all(|c| (vec3::norm(*c) - 1.0).abs() < 1e-14));
    }
}
