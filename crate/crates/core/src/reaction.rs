//! Turing patterns (linearized Brusselator) and excitable spiral waves
//! (Fitzhugh-Nagumo type) advanced with SBDF3.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::NodeSet;
use crate::kernels::Kernel;
use crate::linalg::DenseMatrix;
use crate::operators::{OperatorError, SurfaceOperators};
use crate::timestepping::{ImexSystem, SbdfIntegrator, Snapshot, TimestepError};

#[derive(Debug, Error)]
pub enum ReactionError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Timestep(#[from] TimestepError),
    #[error("{model} blew up at step {step} (t = {t}) with parameters {params}")]
    BlowUp {
        model: String,
        step: usize,
        t: f64,
        params: String,
    },
    #[error("no node lies in the initial strip of half-width {halfwidth}")]
    EmptyStrip { halfwidth: f64 },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown reaction model `{0}`")]
    UnknownModel(String),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Ratio `delta_u / delta_v` shared by every tabulated Turing preset.
pub const TURING_DIFFUSION_RATIO: f64 = 0.516;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuringParams {
    pub delta_u: f64,
    pub delta_v: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl TuringParams {
    /// Tabulated kinetics with `delta_u = 0.516 delta_v`.
    pub fn tabulated(delta_v: f64, tau1: f64, tau2: f64) -> Self {
        Self {
            delta_u: TURING_DIFFUSION_RATIO * delta_v,
            delta_v,
            alpha: 0.899,
            beta: -0.91,
            gamma: -0.899,
            tau1,
            tau2,
        }
    }

    /// Linearization of the kinetics at the origin.
    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [[self.alpha, 1.0], [self.gamma, self.beta]]
    }
}

impl Default for TuringParams {
    fn default() -> Self {
        turing_preset("rbc-spots").unwrap().params
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuringPreset {
    pub name: &'static str,
    /// Surface the parameters were tuned for.
    pub surface: &'static str,
    pub params: TuringParams,
    /// Set when the tabulated surface is not available and another stands in.
    pub substitute_for: Option<&'static str>,
}

const fn preset(
    name: &'static str,
    surface: &'static str,
    delta_v: f64,
    tau1: f64,
    tau2: f64,
    substitute_for: Option<&'static str>,
) -> TuringPreset {
    TuringPreset {
        name,
        surface,
        params: TuringParams {
            delta_u: TURING_DIFFUSION_RATIO * delta_v,
            delta_v,
            alpha: 0.899,
            beta: -0.91,
            gamma: -0.899,
            tau1,
            tau2,
        },
        substitute_for,
    }
}

pub const TURING_PRESETS: [TuringPreset; 8] = [
    preset("rbc-spots", "rbc", 4.5e-3, 0.02, 0.2, None),
    preset("rbc-stripes", "rbc", 2.1e-3, 3.5, 0.0, None),
    preset("sphere-spots", "sphere", 4.5e-3, 0.02, 0.2, Some("bumpy sphere")),
    preset("sphere-stripes", "sphere", 2.1e-3, 3.5, 0.0, Some("bumpy sphere")),
    preset("cyclide-spots", "cyclide", 4.5e-2, 0.02, 0.2, None),
    preset("cyclide-stripes", "cyclide", 1.89e-2, 3.5, 0.0, None),
    preset("bretzel2-spots", "bretzel2", 2.1e-3, 0.02, 0.2, None),
    preset("bretzel2-stripes", "bretzel2", 8.87e-4, 3.5, 0.0, None),
];

pub fn turing_preset(name: &str) -> Result<TuringPreset, ReactionError> {
    TURING_PRESETS
        .iter()
        .find(|p| p.name == name)
        .copied()
        .ok_or_else(|| ReactionError::UnknownPreset(name.to_string()))
}

/// Nodewise Turing kinetics `(f_u, f_v)`.
pub fn turing_rhs(u: f64, v: f64, p: &TuringParams) -> (f64, f64) {
    let fu = p.alpha * u * (1.0 - p.tau1 * v * v) + v * (1.0 - p.tau2 * u);
    let fv = p.beta * v + p.alpha * p.tau1 * u * v * v + u * (p.gamma + p.tau2 * v);
    (fu, fv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub delta_u: f64,
    pub delta_v: f64,
}

impl SpiralParams {
    fn with_delta(scale: f64) -> Self {
        let k = 2.0 * std::f64::consts::PI / 50.0;
        Self {
            a: 0.75,
            b: 0.02,
            alpha: 0.02,
            delta_u: scale * k * k,
            delta_v: 0.0,
        }
    }

    /// Parameters for the (bumpy) sphere.
    pub fn sphere() -> Self {
        Self::with_delta(1.5)
    }

    pub fn cyclide() -> Self {
        Self::with_delta(2.5)
    }

    pub fn for_surface(surface: &str) -> Self {
        match surface {
            "cyclide" => Self::cyclide(),
            _ => Self::sphere(),
        }
    }

    /// Thin reaction zones need `alpha << 1`.
    pub fn is_excitable(&self) -> bool {
        self.alpha <= 0.1
    }
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self::sphere()
    }
}

/// Nodewise Fitzhugh-Nagumo kinetics `(f_u, f_v)`.
pub fn spiral_rhs(u: f64, v: f64, p: &SpiralParams) -> (f64, f64) {
    (u * (1.0 - u) * (u - (v + p.b) / p.a) / p.alpha, u - v)
}

/// Kinetics plus diffusivities, selected by name at runtime.
pub trait ReactionModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn diffusivities(&self) -> (f64, f64);
    fn rhs(&self, u: f64, v: f64) -> (f64, f64);
    fn params_json(&self) -> serde_json::Value;

    fn eval_fields(&self, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]) {
        for i in 0..u.len() {
            (fu[i], fv[i]) = self.rhs(u[i], v[i]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Turing(pub TuringParams);

impl ReactionModel for Turing {
    fn name(&self) -> &str {
        "turing"
    }

    fn diffusivities(&self) -> (f64, f64) {
        (self.0.delta_u, self.0.delta_v)
    }

    fn rhs(&self, u: f64, v: f64) -> (f64, f64) {
        turing_rhs(u, v, &self.0)
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::to_value(self.0).expect("plain struct")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spiral(pub SpiralParams);

impl ReactionModel for Spiral {
    fn name(&self) -> &str {
        "spiral"
    }

    fn diffusivities(&self) -> (f64, f64) {
        (self.0.delta_u, self.0.delta_v)
    }

    fn rhs(&self, u: f64, v: f64) -> (f64, f64) {
        spiral_rhs(u, v, &self.0)
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::to_value(self.0).expect("plain struct")
    }
}

pub type ModelBuilder = fn(Option<&serde_json::Value>) -> Result<Box<dyn ReactionModel>, ReactionError>;

fn parse_params<T: serde::de::DeserializeOwned + Serialize + Default>(
    v: Option<&serde_json::Value>,
) -> Result<T, ReactionError> {
    let Some(v) = v else { return Ok(T::default()) };
    // fields missing from `v` keep their defaults
    let mut base = serde_json::to_value(T::default()).expect("plain struct");
    let (Some(obj), Some(over)) = (base.as_object_mut(), v.as_object()) else {
        return Err(ReactionError::InvalidArgument("reaction parameters must be a JSON object".into()));
    };
    for (k, x) in over {
        if !obj.contains_key(k) {
            return Err(ReactionError::InvalidArgument(format!("unknown parameter `{k}`")));
        }
        obj.insert(k.clone(), x.clone());
    }
    serde_json::from_value(base).map_err(|e| ReactionError::InvalidArgument(e.to_string()))
}

#[derive(Clone, Default)]
pub struct ReactionRegistry {
    builders: BTreeMap<String, ModelBuilder>,
}

impl ReactionRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self::default();
        r.register("turing", |v| Ok(Box::new(Turing(parse_params(v)?))));
        r.register("spiral", |v| Ok(Box::new(Spiral(parse_params(v)?))));
        r
    }

    pub fn register(&mut self, name: &str, build: ModelBuilder) {
        self.builders.insert(name.to_string(), build);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: Option<&serde_json::Value>) -> Result<Box<dyn ReactionModel>, ReactionError> {
        let b = self
            .builders
            .get(name)
            .ok_or_else(|| ReactionError::UnknownModel(name.to_string()))?;
        b(params)
    }
}

/// Uniform `(-0.5, 0.5)` values for `u` and `v` on nodes with
/// `|z - z_mid| <= halfwidth (z_max - z_min)`, zero elsewhere.
pub fn turing_initial(ns: &NodeSet, seed: u64, halfwidth: f64) -> Result<(Vec<f64>, Vec<f64>), ReactionError> {
    if !(halfwidth > 0.0) {
        return Err(ReactionError::InvalidArgument(format!("strip half-width must be positive, got {halfwidth}")));
    }
    let (lo, hi) = ns
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[2]), h.max(p[2])));
    let mid = 0.5 * (lo + hi);
    let band = halfwidth * (hi - lo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ns.len();
    let (mut u, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut hit = 0;
    for (i, p) in ns.points.iter().enumerate() {
        if (p[2] - mid).abs() <= band {
            u[i] = rng.gen_range(-0.5..0.5);
            v[i] = rng.gen_range(-0.5..0.5);
            hit += 1;
        }
    }
    if hit == 0 {
        return Err(ReactionError::EmptyStrip { halfwidth });
    }
    Ok((u, v))
}

/// `u = (1 + tanh(2x + y)) / 2`, `v = (1 - tanh(3z)) / 2`.
pub fn spiral_initial(ns: &NodeSet) -> (Vec<f64>, Vec<f64>) {
    let u = ns.points.iter().map(|p| 0.5 * (1.0 + (2.0 * p[0] + p[1]).tanh())).collect();
    let v = ns.points.iter().map(|p| 0.5 * (1.0 - (3.0 * p[2]).tanh())).collect();
    (u, v)
}

fn mean_std(u: &[f64]) -> (f64, f64) {
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = u.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sign changes of `u - mean(u)` along the node ordering.
pub fn sign_changes(u: &[f64]) -> usize {
    let (mean, _) = mean_std(u);
    let signs: Vec<bool> = u.iter().filter(|&&x| x != mean).map(|&x| x > mean).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step: usize,
    pub t: f64,
    pub rate: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub u_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub u_mean: f64,
    pub u_std: f64,
    pub sign_changes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveStats {
    /// Extremes of `u` over every node and step.
    pub u_min: f64,
    pub u_max: f64,
    pub probes: Vec<usize>,
    pub window_start: f64,
    /// Temporal variance of `u` at each probe over the window.
    pub probe_variance: Vec<f64>,
}

impl WaveStats {
    pub fn mean_variance(&self) -> f64 {
        self.probe_variance.iter().sum::<f64>() / self.probe_variance.len().max(1) as f64
    }

    pub fn min_variance(&self) -> f64 {
        self.probe_variance.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Parameters, diagnostics and final fields of one reaction-diffusion run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub surface: String,
    pub kernel: String,
    pub n: usize,
    pub dt: f64,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
    pub steps: usize,
    pub t_final: f64,
    pub steady: bool,
    pub final_rate: f64,
    pub factorizations: usize,
    pub diagnostics: Vec<StepDiagnostic>,
    pub pattern: PatternStats,
    pub waves: Option<WaveStats>,
    pub warnings: Vec<String>,
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(Snapshot, Snapshot)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub dt: f64,
    pub max_steps: usize,
    /// Stop once `|du|_inf / dt` drops below this.
    pub steady_tol: Option<f64>,
    pub snap_every: usize,
    /// Diagnostic cadence in steps; the final step is always recorded.
    pub diag_every: usize,
    pub probes: Vec<usize>,
    /// Probe samples are collected for `t >= probe_from`.
    pub probe_from: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_steps: 100_000,
            steady_tol: Some(1e-4),
            snap_every: 0,
            diag_every: 100,
            probes: Vec::new(),
            probe_from: 0.0,
        }
    }
}

/// Output of [`integrate`], before it is wrapped into a [`RunRecord`].
#[derive(Clone, Debug, PartialEq)]
pub struct Integration {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: usize,
    pub t: f64,
    pub steady: bool,
    pub rate: f64,
    pub factorizations: usize,
    pub diagnostics: Vec<StepDiagnostic>,
    pub snapshots: Vec<(Snapshot, Snapshot)>,
    pub u_min: f64,
    pub u_max: f64,
    pub probe_variance: Vec<f64>,
}

fn diagnostic(step: usize, t: f64, rate: f64, u: &[f64]) -> StepDiagnostic {
    let (_, u_std) = mean_std(u);
    StepDiagnostic {
        step,
        t,
        rate,
        u_min: u.iter().copied().fold(f64::INFINITY, f64::min),
        u_max: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        u_std,
    }
}

/// SBDF3 with the SBDF1, SBDF2 bootstrap, tracking extremes, probe series
/// and snapshots.
pub fn integrate(
    model: &dyn ReactionModel,
    l: &DenseMatrix,
    u0: Vec<f64>,
    v0: Vec<f64>,
    opts: &RunOptions,
) -> Result<Integration, ReactionError> {
    if let Some(&p) = opts.probes.iter().find(|&&p| p >= u0.len()) {
        return Err(ReactionError::InvalidArgument(format!("probe {p} out of range")));
    }
    let reaction = |_t: f64, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]| model.eval_fields(u, v, fu, fv);
    let (delta_u, delta_v) = model.diffusivities();
    let sys = ImexSystem {
        l,
        delta_u,
        delta_v,
        reaction: &reaction,
        u0,
        v0,
        exact: None,
    };
    let mut it = SbdfIntegrator::new(&sys, opts.dt, 3)?;
    let blow_up = |e: TimestepError| match e {
        TimestepError::BlowUp { step, t, .. } => ReactionError::BlowUp {
            model: model.name().to_string(),
            step,
            t,
            params: model.params_json().to_string(),
        },
        e => e.into(),
    };
    let (mut u_min, mut u_max) = it.u().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut diagnostics = vec![diagnostic(0, 0.0, f64::NAN, it.u())];
    let mut snapshots = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); opts.probes.len()];
    let mut steady = false;
    let mut rate = f64::INFINITY;
    while it.steps() < opts.max_steps {
        rate = it.step().map_err(blow_up)?;
        let (step, t, u) = (it.steps(), it.time(), it.u());
        for &x in u {
            u_min = u_min.min(x);
            u_max = u_max.max(x);
        }
        if t >= opts.probe_from - 1e-9 * opts.dt {
            for (s, &p) in series.iter_mut().zip(&opts.probes) {
                s.push(u[p]);
            }
        }
        steady = opts.steady_tol.is_some_and(|tol| rate < tol);
        let last = steady || step == opts.max_steps;
        if (opts.diag_every > 0 && step % opts.diag_every == 0) || last {
            diagnostics.push(diagnostic(step, t, rate, u));
        }
        if opts.snap_every > 0 && (step % opts.snap_every == 0 || last) {
            let mk = |values: &[f64]| Snapshot {
                step,
                t,
                values: values.to_vec(),
            };
            snapshots.push((mk(it.u()), mk(it.v())));
        }
        if steady {
            break;
        }
    }
    let probe_variance = series.iter().map(|s| if s.is_empty() { 0.0 } else { mean_std(s).1.powi(2) }).collect();
    Ok(Integration {
        u: it.u().to_vec(),
        v: it.v().to_vec(),
        steps: it.steps(),
        t: it.time(),
        steady,
        rate,
        factorizations: it.factorizations(),
        diagnostics,
        snapshots,
        u_min,
        u_max,
        probe_variance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuringConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub steady_tol: f64,
    pub seed: u64,
    pub halfwidth: f64,
    pub snap_every: usize,
    pub diag_every: usize,
}

impl Default for TuringConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_steps: 100_000,
            steady_tol: 1e-4,
            seed: 1,
            halfwidth: 0.05,
            snap_every: 0,
            diag_every: 100,
        }
    }
}

fn finish(
    model: &dyn ReactionModel,
    surface: &str,
    kernel: &Kernel,
    dt: f64,
    seed: Option<u64>,
    run: Integration,
    waves: Option<WaveStats>,
    warnings: Vec<String>,
    timings: BTreeMap<String, f64>,
) -> RunRecord {
    let (u_mean, u_std) = mean_std(&run.u);
    RunRecord {
        model: model.name().to_string(),
        surface: surface.to_string(),
        kernel: kernel.spec(),
        n: run.u.len(),
        dt,
        seed,
        params: model.params_json(),
        steps: run.steps,
        t_final: run.t,
        steady: run.steady,
        final_rate: run.rate,
        factorizations: run.factorizations,
        diagnostics: run.diagnostics,
        pattern: PatternStats {
            u_mean,
            u_std,
            sign_changes: sign_changes(&run.u),
        },
        waves,
        warnings,
        timings,
        u: run.u,
        v: run.v,
        snapshots: run.snapshots,
    }
}

fn laplacian(kernel: &Kernel, ns: &NodeSet) -> Result<DenseMatrix, ReactionError> {
    let opts = crate::operators::BuildOptions {
        laplacian: true,
        cond_estimate: false,
    };
    Ok(SurfaceOperators::build_with(kernel, ns, opts)?.into_laplacian())
}

/// Turing run from strip initial data until steady state or `max_steps`.
/// A preset tuned for another surface is run anyway, with a warning.
pub fn run_turing(
    surface: &str,
    kernel: &Kernel,
    ns: &NodeSet,
    params: &TuringParams,
    preset: Option<&TuringPreset>,
    cfg: &TuringConfig,
) -> Result<RunRecord, ReactionError> {
    let mut warnings = Vec::new();
    if let Some(p) = preset {
        if p.surface != surface {
            warnings.push(format!("preset `{}` was tuned for `{}`, running on `{surface}`", p.name, p.surface));
        }
        if let Some(orig) = p.substitute_for {
            warnings.push(format!("preset `{}` stands in for the {orig}", p.name));
        }
    }
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let l = laplacian(kernel, ns)?;
    timings.insert("build_seconds".into(), start.elapsed().as_secs_f64());
    let (u0, v0) = turing_initial(ns, cfg.seed, cfg.halfwidth)?;
    let opts = RunOptions {
        dt: cfg.dt,
        max_steps: cfg.max_steps,
        steady_tol: Some(cfg.steady_tol),
        snap_every: cfg.snap_every,
        diag_every: cfg.diag_every,
        ..Default::default()
    };
    let model = Turing(*params);
    let start = Instant::now();
    let run = integrate(&model, &l, u0, v0, &opts)?;
    timings.insert("run_seconds".into(), start.elapsed().as_secs_f64());
    Ok(finish(&model, surface, kernel, cfg.dt, Some(cfg.seed), run, None, warnings, timings))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpiralConfig {
    pub dt: f64,
    pub t_end: f64,
    pub probe_count: usize,
    /// Trailing fraction of the run used for probe statistics.
    pub probe_window: f64,
    pub snap_every: usize,
    pub diag_every: usize,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_end: 45.0,
            probe_count: 10,
            probe_window: 0.25,
            snap_every: 0,
            diag_every: 50,
        }
    }
}

/// Evenly spaced node indices.
pub fn probe_indices(n: usize, count: usize) -> Vec<usize> {
    let count = count.min(n);
    (0..count).map(|k| k * n / count).collect()
}

pub fn run_spiral(
    surface: &str,
    kernel: &Kernel,
    ns: &NodeSet,
    params: &SpiralParams,
    cfg: &SpiralConfig,
) -> Result<RunRecord, ReactionError> {
    let mut warnings = Vec::new();
    if !params.is_excitable() {
        warnings.push(format!("alpha = {} is outside the excitable regime alpha << 1", params.alpha));
    }
    let steps = crate::timestepping::step_count(cfg.dt, cfg.t_end)?;
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let l = laplacian(kernel, ns)?;
    timings.insert("build_seconds".into(), start.elapsed().as_secs_f64());
    let (u0, v0) = spiral_initial(ns);
    let probes = probe_indices(ns.len(), cfg.probe_count);
    let window_start = cfg.t_end * (1.0 - cfg.probe_window);
    let opts = RunOptions {
        dt: cfg.dt,
        max_steps: steps,
        steady_tol: None,
        snap_every: cfg.snap_every,
        diag_every: cfg.diag_every,
        probes: probes.clone(),
        probe_from: window_start,
    };
    let model = Spiral(*params);
    let start = Instant::now();
    let mut run = integrate(&model, &l, u0, v0, &opts)?;
    timings.insert("run_seconds".into(), start.elapsed().as_secs_f64());
    let waves = WaveStats {
        u_min: run.u_min,
        u_max: run.u_max,
        probes,
        window_start,
        probe_variance: std::mem::take(&mut run.probe_variance),
    };
    Ok(finish(&model, surface, kernel, cfg.dt, None, run, Some(waves), warnings, timings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_nodes, Torus, UnitSphere};

    #[test]
    fn turing_kinetics_values() {
        let p = TuringParams {
            tau1: 0.0,
            tau2: 0.0,
            ..TuringParams::default()
        };
        assert_eq!(turing_rhs(0.0, 0.0, &TuringParams::default()), (0.0, 0.0));
        let (fu, fv) = turing_rhs(1.0, 1.0, &p);
        assert!((fu - 1.899).abs() < 1e-14 && (fv + 1.809).abs() < 1e-14);
    }

    #[test]
    fn turing_jacobian_matches_fd() {
        let p = TuringParams::default();
        let h = 1e-6;
        let j = p.jacobian();
        let du = turing_rhs(h, 0.0, &p);
        let dv = turing_rhs(0.0, h, &p);
        let fd = [[du.0 / h, dv.0 / h], [du.1 / h, dv.1 / h]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((fd[a][b] - j[a][b]).abs() < 1e-5, "{fd:?} {j:?}");
            }
        }
    }

    #[test]
    fn presets_follow_the_table() {
        for p in TURING_PRESETS {
            let q = p.params;
            assert!((q.delta_u - 0.516 * q.delta_v).abs() < 1e-18);
            assert_eq!(q.alpha, -q.gamma);
        }
        let p = turing_preset("rbc-spots").unwrap().params;
        assert_eq!((p.delta_v, p.beta, p.tau1, p.tau2), (4.5e-3, -0.91, 0.02, 0.2));
        assert!(turing_preset("bumpy-spots").is_err());
        assert!(turing_preset("sphere-stripes").unwrap().substitute_for.is_some());
    }

    #[test]
    fn spiral_kinetics_values() {
        let p = SpiralParams::sphere();
        assert_eq!(spiral_rhs(0.0, 0.3, &p).0, 0.0);
        assert_eq!(spiral_rhs(1.0, 0.3, &p).0, 0.0);
        assert!(spiral_rhs((0.3 + p.b) / p.a, 0.3, &p).0.abs() < 1e-15);
        let (fu, fv) = spiral_rhs(0.5, 0.0, &p);
        assert!((fu - 12.5 * (0.5 - 0.02 / 0.75)).abs() < 1e-12);
        assert!((fu - 5.9167).abs() < 1e-4);
        assert_eq!(fv, 0.5);
        let k = 2.0 * std::f64::consts::PI / 50.0;
        assert!((SpiralParams::cyclide().delta_u - 2.5 * k * k).abs() < 1e-18);
        assert!(!SpiralParams { alpha: 0.5, ..p }.is_excitable());
    }

    #[test]
    fn registry_builds_models() {
        let r = ReactionRegistry::with_builtins();
        assert_eq!(r.names().collect::<Vec<_>>(), ["spiral", "turing"]);
        let m = r.build("spiral", Some(&serde_json::json!({"alpha": 0.5}))).unwrap();
        assert_eq!(m.params_json()["alpha"], 0.5);
        assert_eq!(m.params_json()["a"], 0.75);
        assert!(r.build("spiral", Some(&serde_json::json!({"gamma": 1}))).is_err());
        assert!(r.build("gray-scott", None).is_err());
        assert_eq!(r.build("turing", None).unwrap().diffusivities().1, 4.5e-3);
    }

    #[test]
    fn initial_conditions() {
        let ns = generate_nodes(&Torus, 600, 4).unwrap();
        let (u, v) = turing_initial(&ns, 9, 0.05).unwrap();
        let hit = u.iter().filter(|x| **x != 0.0).count();
        assert!(hit > 12 && hit < 150, "{hit}");
        assert!(u.iter().chain(&v).all(|x| x.abs() < 0.5));
        assert_eq!(turing_initial(&ns, 9, 0.05).unwrap(), (u, v));
        let (all, _) = turing_initial(&ns, 9, 0.6).unwrap();
        assert!(all.iter().all(|x| *x != 0.0));
        assert!(turing_initial(&ns, 9, 0.0).is_err());

        let (u, v) = spiral_initial(&ns);
        assert!(u.iter().chain(&v).all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let ns = generate_nodes(&UnitSphere, 100, 1).unwrap();
        let l = laplacian(&Kernel::imq(2.8).unwrap(), &ns).unwrap();
        let opts = RunOptions {
            max_steps: 100,
            steady_tol: None,
            ..Default::default()
        };
        let run = integrate(&Turing(TuringParams::default()), &l, vec![0.0; 100], vec![0.0; 100], &opts).unwrap();
        assert!(run.u.iter().chain(&run.v).all(|x| x.abs() <= 1e-12));
        assert_eq!(run.factorizations, 6);
        assert_eq!(sign_changes(&[1.0, -1.0, 1.0, 1.0]), 2);
    }
}
