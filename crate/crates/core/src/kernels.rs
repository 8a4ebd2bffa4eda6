//! Radial kernels and the runtime registry that builds them from spec
//! strings such as `imq:eps=3.0` or `matern:nu=4,eps=4.0`.
//!
//! Every kernel exposes `phi(r)` and the radial quotient `eta(r) = phi'(r)/r`,
//! which is what the projected gradient of a kernel translate needs. Both are
//! evaluated in closed forms that have no removable singularity at `r = 0`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape parameter must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("Matern order must be an integer >= 3, got {0}")]
    InvalidNu(f64),
    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),
    #[error("malformed kernel spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    Matern,
    Imq,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Matern => "matern",
            KernelFamily::Imq => "imq",
        })
    }
}

/// Smoothness metadata. `continuity` is the order `k` with `phi in C^k(R^3)`
/// (`None` for `C^inf`); `sobolev_s` is the native-space order on a surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothness {
    pub continuity: Option<u32>,
    pub sobolev_s: f64,
}

/// A radial function `phi(r)` with shape parameter `epsilon`.
pub trait RadialKernel: Send + Sync + fmt::Debug {
    fn family(&self) -> KernelFamily;
    fn epsilon(&self) -> f64;
    /// Matern order, if any.
    fn nu(&self) -> Option<f64> {
        None
    }
    fn phi(&self, r: f64) -> f64;
    /// `phi'(r) / r`, continuous at `r = 0`.
    fn eta(&self, r: f64) -> f64;
    fn smoothness(&self) -> Smoothness;
    /// Canonical spec string, parseable by [`KernelRegistry::parse`].
    fn spec(&self) -> String;
}

/// Shared handle to a kernel chosen at runtime.
#[derive(Clone)]
pub struct Kernel(Arc<dyn RadialKernel>);

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kernel({})", self.0.spec())
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.spec())
    }
}

impl Kernel {
    pub fn new(inner: impl RadialKernel + 'static) -> Self {
        Kernel(Arc::new(inner))
    }

    pub fn matern(nu: f64, epsilon: f64) -> Result<Self, KernelError> {
        make_matern(nu, epsilon)
    }

    pub fn imq(epsilon: f64) -> Result<Self, KernelError> {
        make_imq(epsilon)
    }

    /// Parses a spec string with the built-in registry.
    pub fn from_spec(spec: &str) -> Result<Self, KernelError> {
        KernelRegistry::with_builtins().parse(spec)
    }

    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        self.0.phi(r)
    }

    #[inline]
    pub fn eta(&self, r: f64) -> f64 {
        self.0.eta(r)
    }

    pub fn family(&self) -> KernelFamily {
        self.0.family()
    }

    pub fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }

    pub fn nu(&self) -> Option<f64> {
        self.0.nu()
    }

    pub fn smoothness(&self) -> Smoothness {
        self.0.smoothness()
    }

    pub fn smoothness_s(&self) -> f64 {
        self.0.smoothness().sobolev_s
    }

    pub fn spec(&self) -> String {
        self.0.spec()
    }
}

pub fn eval_phi(k: &Kernel, r: f64) -> f64 {
    k.phi(r)
}

pub fn eval_eta(k: &Kernel, r: f64) -> f64 {
    k.eta(r)
}

fn check_epsilon(epsilon: f64) -> Result<(), KernelError> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidEpsilon(epsilon))
    }
}

/// Matern kernel of integer order `nu >= 3` in three dimensions.
///
/// The Bessel order `nu - 3/2 = m + 1/2` is half-integral, so
/// `phi(r) = exp(-z) P(z) / P(0)` with `z = eps r` and
/// `P(z) = sum_k (m+k)! / (k! (m-k)! 2^k) z^(m-k)`. Since `P - P'` is
/// divisible by `z`, `eta(r) = -eps^2 exp(-z) R(z) / P(0)` with
/// `R = (P - P') / z`, a polynomial.
#[derive(Clone, Debug)]
pub struct Matern {
    nu: u32,
    epsilon: f64,
    /// Normalized ascending coefficients of `P(z) / P(0)`.
    p: Vec<f64>,
    /// Ascending coefficients of `R(z) / P(0)`.
    r: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Matern {
    pub fn new(nu: f64, epsilon: f64) -> Result<Self, KernelError> {
        check_epsilon(epsilon)?;
        if !(nu.is_finite() && nu.fract() == 0.0 && (3.0..=40.0).contains(&nu)) {
            return Err(KernelError::InvalidNu(nu));
        }
        let m = nu as usize - 2;
        // ascending: coefficient of z^j is a_{m-j}
        let mut p = vec![0.0; m + 1];
        for k in 0..=m {
            let a = factorial(m + k) / (factorial(k) * factorial(m - k) * 2f64.powi(k as i32));
            p[m - k] = a;
        }
        let p0 = p[0];
        p.iter_mut().for_each(|c| *c /= p0);
        // P - P' has zero constant term; divide by z.
        let mut r = vec![0.0; m];
        for (j, rj) in r.iter_mut().enumerate() {
            let next = if j + 2 <= m { (j + 2) as f64 * p[j + 2] } else { 0.0 };
            *rj = p[j + 1] - next;
        }
        Ok(Self {
            nu: nu as u32,
            epsilon,
            p,
            r,
        })
    }

    /// Ascending coefficients of the normalized polynomial factor.
    pub fn polynomial(&self) -> &[f64] {
        &self.p
    }
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * z + v)
}

impl RadialKernel for Matern {
    fn family(&self) -> KernelFamily {
        KernelFamily::Matern
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn nu(&self) -> Option<f64> {
        Some(self.nu as f64)
    }

    fn phi(&self, r: f64) -> f64 {
        let z = self.epsilon * r;
        (-z).exp() * horner(&self.p, z)
    }

    fn eta(&self, r: f64) -> f64 {
        let z = self.epsilon * r;
        -self.epsilon * self.epsilon * (-z).exp() * horner(&self.r, z)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            continuity: Some(2 * (self.nu - 2)),
            sobolev_s: self.nu as f64 - 0.5,
        }
    }

    fn spec(&self) -> String {
        format!("matern:nu={},eps={}", self.nu, self.epsilon)
    }
}

/// Inverse multiquadric `phi(r) = (1 + (eps r)^2)^(-1/2)`.
#[derive(Clone, Debug)]
pub struct InverseMultiquadric {
    epsilon: f64,
}

impl InverseMultiquadric {
    pub fn new(epsilon: f64) -> Result<Self, KernelError> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon })
    }
}

impl RadialKernel for InverseMultiquadric {
    fn family(&self) -> KernelFamily {
        KernelFamily::Imq
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn phi(&self, r: f64) -> f64 {
        let z = self.epsilon * r;
        1.0 / (1.0 + z * z).sqrt()
    }

    fn eta(&self, r: f64) -> f64 {
        let z = self.epsilon * r;
        let s = 1.0 + z * z;
        -self.epsilon * self.epsilon / (s * s.sqrt())
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            continuity: None,
            sobolev_s: f64::INFINITY,
        }
    }

    fn spec(&self) -> String {
        format!("imq:eps={}", self.epsilon)
    }
}

pub fn make_matern(nu: f64, epsilon: f64) -> Result<Kernel, KernelError> {
    Matern::new(nu, epsilon).map(Kernel::new)
}

pub fn make_imq(epsilon: f64) -> Result<Kernel, KernelError> {
    InverseMultiquadric::new(epsilon).map(Kernel::new)
}

pub type KernelParams = BTreeMap<String, f64>;
pub type KernelBuilder = fn(&KernelParams) -> Result<Kernel, KernelError>;

/// Maps family names to constructors.
#[derive(Clone, Default)]
pub struct KernelRegistry {
    builders: BTreeMap<String, (KernelBuilder, &'static [&'static str])>,
}

fn param(p: &KernelParams, key: &str, spec: &str) -> Result<f64, KernelError> {
    p.get(key).copied().ok_or_else(|| KernelError::Parse {
        spec: spec.to_string(),
        reason: format!("missing `{key}`"),
    })
}

impl KernelRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = Self::default();
        reg.register("imq", &["eps"], |p| make_imq(param(p, "eps", "imq")?));
        reg.register("matern", &["nu", "eps"], |p| {
            make_matern(param(p, "nu", "matern")?, param(p, "eps", "matern")?)
        });
        reg
    }

    pub fn register(&mut self, family: &str, keys: &'static [&'static str], build: KernelBuilder) {
        self.builders.insert(family.to_string(), (build, keys));
    }

    pub fn families(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    /// Parses `family:key=value,key=value`.
    pub fn parse(&self, spec: &str) -> Result<Kernel, KernelError> {
        let perr = |reason: String| KernelError::Parse {
            spec: spec.to_string(),
            reason,
        };
        let (family, rest) = spec
            .trim()
            .split_once(':')
            .ok_or_else(|| perr("expected `family:key=value,...`".into()))?;
        let family = family.trim().to_ascii_lowercase();
        let (build, keys) = self
            .builders
            .get(&family)
            .ok_or_else(|| KernelError::UnknownFamily(family.clone()))?;
        let mut params = KernelParams::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| perr(format!("`{item}` is not key=value")))?;
            let k = k.trim().to_ascii_lowercase();
            if !keys.contains(&k.as_str()) {
                return Err(perr(format!("unknown key `{k}` for {family}")));
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| perr(format!("`{v}` is not a number")))?;
            if params.insert(k.clone(), v).is_some() {
                return Err(perr(format!("duplicate key `{k}`")));
            }
        }
        build(&params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_closed_forms() {
        let k3 = Matern::new(3.0, 1.0).unwrap();
        assert_eq!(k3.polynomial(), &[1.0, 1.0]);
        let k4 = Matern::new(4.0, 1.0).unwrap();
        // (3 + 3z + z^2) / 3
        assert_eq!(k4.polynomial(), &[1.0, 1.0, 1.0 / 3.0]);
        assert_eq!(k4.phi(0.0), 1.0);
    }

    #[test]
    fn spec_examples() {
        let k = make_matern(3.0, 1.0).unwrap();
        assert!((k.phi(2.0) - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((k.phi(2.0) - 0.406_005_849_709_838_3).abs() < 1e-12);
        let k = make_matern(3.0, 2.0).unwrap();
        assert!((k.phi(1.0) - 0.406_005_849_709_838_3).abs() < 1e-12);

        let k = make_imq(3.0).unwrap();
        assert!((k.phi(1.0) - 1.0 / 10f64.sqrt()).abs() < 1e-15);
        let k = make_imq(2.0).unwrap();
        assert_eq!(k.eta(0.0), -4.0);
        let k = make_imq(1.0).unwrap();
        assert_eq!(k.phi(0.0), 1.0);
        assert!((k.eta(1.0) + 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn matern_nu3_eta_at_zero() {
        let k = make_matern(3.0, 1.0).unwrap();
        assert_eq!(k.eta(0.0), -1.0);
    }

    #[test]
    fn far_field_is_bounded() {
        for k in [make_imq(2.5).unwrap(), make_matern(7.0, 3.0).unwrap()] {
            let v = k.phi(1e6 / k.epsilon());
            assert!(v >= 0.0 && v <= k.phi(0.0));
            assert!(k.eta(1e6).is_finite());
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(make_imq(0.0).unwrap_err(), KernelError::InvalidEpsilon(0.0));
        assert!(matches!(make_matern(2.0, 1.0), Err(KernelError::InvalidNu(_))));
        assert!(matches!(make_matern(4.5, 1.0), Err(KernelError::InvalidNu(_))));
        assert!(matches!(make_matern(4.0, -1.0), Err(KernelError::InvalidEpsilon(_))));
    }

    #[test]
    fn smoothness_metadata() {
        let k = make_matern(4.0, 1.0).unwrap();
        assert_eq!(k.smoothness().continuity, Some(4));
        assert_eq!(k.smoothness_s(), 3.5);
        assert_eq!(make_matern(7.0, 1.0).unwrap().smoothness().continuity, Some(10));
        assert!(make_imq(1.0).unwrap().smoothness_s().is_infinite());
    }

    #[test]
    fn registry_parses_specs() {
        let k = Kernel::from_spec("imq:eps=3.0").unwrap();
        assert_eq!(k.family(), KernelFamily::Imq);
        assert_eq!(k.epsilon(), 3.0);
        let k = Kernel::from_spec("matern:nu=4,eps=4.0").unwrap();
        assert_eq!(k.nu(), Some(4.0));
        assert_eq!(Kernel::from_spec(&k.spec()).unwrap().spec(), k.spec());
        assert!(matches!(Kernel::from_spec("gauss:eps=1"), Err(KernelError::UnknownFamily(_))));
        assert!(matches!(Kernel::from_spec("imq"), Err(KernelError::Parse { .. })));
        assert!(matches!(Kernel::from_spec("imq:eps=x"), Err(KernelError::Parse { .. })));
        assert!(matches!(Kernel::from_spec("imq:eps=1,nu=3"), Err(KernelError::Parse { .. })));
        assert!(matches!(Kernel::from_spec("matern:eps=1"), Err(KernelError::Parse { .. })));
    }
}
