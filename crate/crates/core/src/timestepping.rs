//! Backward differentiation time stepping for `u' = delta L u + f`.
//!
//! Every scheme has the form
//! `a0 u^{n+1} + sum_k a_k u^{n+1-k} = dt (delta L u^{n+1} + r)`, where `r`
//! is a known forcing at `t^{n+1}` (BDF) or an extrapolation of explicit
//! reaction terms (SBDF). The matrix `a0 I - dt delta L` is factored once per
//! distinct `a0`; with `delta = 0` it is a scaled identity and no
//! factorization happens.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm_inf_vec, DenseMatrix, LinalgError, LuFactor};

#[derive(Debug, Error)]
pub enum TimestepError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("solution blew up at step {step} (t = {t}): |u|_inf = {norm:.3e}")]
    BlowUp { step: usize, t: f64, norm: f64 },
    #[error("{0}")]
    InvalidArgument(String),
}

pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Implicit BDF coefficients `(a0, [a1, a2, ...])`, orders 1 to 4.
pub fn bdf_coefficients(order: usize) -> (f64, &'static [f64]) {
    match order {
        1 => (1.0, &[-1.0]),
        2 => (1.5, &[-2.0, 0.5]),
        3 => (11.0 / 6.0, &[-3.0, 1.5, -1.0 / 3.0]),
        4 => (25.0 / 12.0, &[-4.0, 3.0, -4.0 / 3.0, 0.25]),
        _ => panic!("BDF order {order} not supported"),
    }
}

/// Extrapolation weights for the explicit terms of SBDF1..3.
pub fn sbdf_explicit(order: usize) -> &'static [f64] {
    match order {
        1 => &[1.0],
        2 => &[2.0, -1.0],
        3 => &[3.0, -3.0, 1.0],
        _ => panic!("SBDF order {order} not supported"),
    }
}

enum Solver {
    ScaledIdentity(f64),
    Lu(Box<LuFactor>),
}

/// Cache of `(a0 I - dt delta L)` factorizations.
pub struct ImplicitSolver<'a> {
    l: &'a DenseMatrix,
    dt: f64,
    delta: f64,
    cache: Vec<(f64, Solver)>,
    factorizations: usize,
}

impl<'a> ImplicitSolver<'a> {
    pub fn new(l: &'a DenseMatrix, dt: f64, delta: f64) -> Result<Self, TimestepError> {
        if !l.is_square() {
            return Err(TimestepError::InvalidArgument("operator must be square".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TimestepError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(TimestepError::InvalidArgument(format!("diffusivity must be >= 0, got {delta}")));
        }
        Ok(Self {
            l,
            dt,
            delta,
            cache: Vec::new(),
            factorizations: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// LU factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn solver(&mut self, a0: f64) -> Result<&Solver, TimestepError> {
        if let Some(pos) = self.cache.iter().position(|(c, _)| *c == a0) {
            return Ok(&self.cache[pos].1);
        }
        let s = if self.delta == 0.0 {
            Solver::ScaledIdentity(a0)
        } else {
            let n = self.dim();
            let mut m = self.l.clone();
            m.scale(-self.dt * self.delta);
            for i in 0..n {
                m.row_mut(i)[i] += a0;
            }
            self.factorizations += 1;
            Solver::Lu(Box::new(LuFactor::factor(&m)?))
        };
        self.cache.push((a0, s));
        Ok(&self.cache.last().unwrap().1)
    }

    /// Solves `(a0 I - dt delta L) x = rhs`.
    pub fn solve(&mut self, a0: f64, rhs: &[f64], x: &mut [f64]) -> Result<(), TimestepError> {
        match self.solver(a0)? {
            Solver::ScaledIdentity(c) => {
                let inv = 1.0 / c;
                x.iter_mut().zip(rhs).for_each(|(xi, r)| *xi = r * inv);
            }
            Solver::Lu(f) => f.solve_into(rhs, x),
        }
        Ok(())
    }
}

fn check_finite(u: &[f64], step: usize, t: f64) -> Result<(), TimestepError> {
    let norm = norm_inf_vec(u);
    if !(norm <= BLOWUP_THRESHOLD) {
        return Err(TimestepError::BlowUp { step, t, norm });
    }
    Ok(())
}

/// Fills `out` with a time-dependent nodal field.
pub type FieldFn<'a> = dyn Fn(f64, &mut [f64]) + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Startup {
    /// Seed `u^1..u^3` from the exact solution.
    Exact,
    /// One BDF1, one BDF2 and one BDF3 step.
    BdfRamp,
}

pub struct DiffusionProblem<'a> {
    pub l: &'a DenseMatrix,
    pub delta: f64,
    pub forcing: Option<&'a FieldFn<'a>>,
    pub u0: Vec<f64>,
    /// Exact solution, required for [`Startup::Exact`].
    pub exact: Option<&'a FieldFn<'a>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub u: Vec<f64>,
    pub steps: usize,
    pub t: f64,
    pub factorizations: usize,
    pub snapshots: Vec<Snapshot>,
}

/// Number of steps of size `dt` that reach `t_end`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize, TimestepError> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(TimestepError::InvalidArgument(format!("bad dt {dt} or t_end {t_end}")));
    }
    Ok((t_end / dt - 1e-9).ceil().max(0.0) as usize)
}

/// Fourth-order BDF. `snap_every = 0` disables snapshots.
pub fn bdf4_run(
    p: &DiffusionProblem,
    dt: f64,
    t_end: f64,
    startup: Startup,
    snap_every: usize,
) -> Result<Trajectory, TimestepError> {
    bdf_run(p, 4, dt, step_count(dt, t_end)?, startup, snap_every)
}

/// BDF of the given order (1..=4) for `steps` steps; `t_n = n dt`.
pub fn bdf_run(
    p: &DiffusionProblem,
    order: usize,
    dt: f64,
    steps: usize,
    startup: Startup,
    snap_every: usize,
) -> Result<Trajectory, TimestepError> {
    if !(1..=4).contains(&order) {
        return Err(TimestepError::InvalidArgument(format!("BDF order {order} not in 1..=4")));
    }
    let n = p.l.rows();
    if p.u0.len() != n {
        return Err(TimestepError::InvalidArgument(format!("u0 has {} values, expected {n}", p.u0.len())));
    }
    if startup == Startup::Exact && p.exact.is_none() && order > 1 {
        return Err(TimestepError::InvalidArgument("exact startup needs the exact solution".into()));
    }
    let mut solver = ImplicitSolver::new(p.l, dt, p.delta)?;
    // history[0] = u^n, history[1] = u^{n-1}, ...
    let mut history: Vec<Vec<f64>> = vec![p.u0.clone()];
    let mut snapshots = Vec::new();
    // snapshots at multiples of `snap_every` and at the last step
    let mut snap = |step: usize, u: &[f64]| {
        if snap_every > 0 {
            snapshots.push(Snapshot {
                step,
                t: step as f64 * dt,
                values: u.to_vec(),
            });
        }
    };
    let mut rhs = vec![0.0; n];
    let mut f = vec![0.0; n];
    for step in 1..=steps {
        let t = step as f64 * dt;
        let mut next = vec![0.0; n];
        let avail = history.len();
        if startup == Startup::Exact && avail < order {
            (p.exact.unwrap())(t, &mut next);
        } else {
            let k = order.min(avail);
            let (a0, a) = bdf_coefficients(k);
            match p.forcing {
                Some(src) => {
                    src(t, &mut f);
                    rhs.iter_mut().zip(&f).for_each(|(r, fi)| *r = dt * fi);
                }
                None => rhs.iter_mut().for_each(|r| *r = 0.0),
            }
            for (ak, uk) in a.iter().zip(&history) {
                rhs.iter_mut().zip(uk).for_each(|(r, u)| *r -= ak * u);
            }
            solver.solve(a0, &rhs, &mut next)?;
        }
        check_finite(&next, step, t)?;
        if step % snap_every.max(1) == 0 || step == steps {
            snap(step, &next);
        }
        history.insert(0, next);
        history.truncate(order);
    }
    Ok(Trajectory {
        u: history.swap_remove(0),
        steps,
        t: steps as f64 * dt,
        factorizations: solver.factorizations(),
        snapshots,
    })
}

/// Nodal reaction terms `f_u(t, u, v)`, `f_v(t, u, v)`.
pub trait Reaction: Sync {
    fn eval(&self, t: f64, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &[f64], &mut [f64], &mut [f64]) + Sync> Reaction for F {
    fn eval(&self, t: f64, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]) {
        self(t, u, v, fu, fv)
    }
}

pub struct ImexSystem<'a> {
    pub l: &'a DenseMatrix,
    pub delta_u: f64,
    pub delta_v: f64,
    pub reaction: &'a dyn Reaction,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Exact solution; when present it replaces the SBDF1/SBDF2 bootstrap
    /// steps. The bootstrap alone caps the observed global order at 2.
    pub exact: Option<&'a PairFn<'a>>,
}

/// Fills `(u, v)` at time `t`.
pub type PairFn<'a> = dyn Fn(f64, &mut [f64], &mut [f64]) + Sync + 'a;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImexOptions {
    pub snap_every: usize,
    /// Stop once `|du|_inf / dt` falls below this.
    pub steady_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImexTrajectory {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: usize,
    pub t: f64,
    pub steady: bool,
    /// Last value of `|du|_inf / dt`.
    pub rate: f64,
    pub factorizations: usize,
    pub snapshots: Vec<(Snapshot, Snapshot)>,
}

/// Semi-implicit BDF stepper; starts at SBDF1 and raises the order by one
/// per step up to `order`.
pub struct SbdfIntegrator<'a> {
    order: usize,
    dt: f64,
    reaction: &'a dyn Reaction,
    su: ImplicitSolver<'a>,
    sv: ImplicitSolver<'a>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    fu: Vec<Vec<f64>>,
    fv: Vec<Vec<f64>>,
    step: usize,
    rhs: Vec<f64>,
}

impl<'a> SbdfIntegrator<'a> {
    pub fn new(s: &ImexSystem<'a>, dt: f64, order: usize) -> Result<Self, TimestepError> {
        if !(1..=3).contains(&order) {
            return Err(TimestepError::InvalidArgument(format!("SBDF order {order} not in 1..=3")));
        }
        let n = s.l.rows();
        if s.u0.len() != n || s.v0.len() != n {
            return Err(TimestepError::InvalidArgument(format!("initial fields must have {n} values")));
        }
        Ok(Self {
            order,
            dt,
            reaction: s.reaction,
            su: ImplicitSolver::new(s.l, dt, s.delta_u)?,
            sv: ImplicitSolver::new(s.l, dt, s.delta_v)?,
            u: vec![s.u0.clone()],
            v: vec![s.v0.clone()],
            fu: Vec::new(),
            fv: Vec::new(),
            step: 0,
            rhs: vec![0.0; n],
        })
    }

    pub fn u(&self) -> &[f64] {
        &self.u[0]
    }

    pub fn v(&self) -> &[f64] {
        &self.v[0]
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn factorizations(&self) -> usize {
        self.su.factorizations() + self.sv.factorizations()
    }

    fn push_reaction(&mut self, k: usize) {
        let n = self.rhs.len();
        let t = self.time();
        let mut fu = vec![0.0; n];
        let mut fv = vec![0.0; n];
        self.reaction.eval(t, &self.u[0], &self.v[0], &mut fu, &mut fv);
        self.fu.insert(0, fu);
        self.fv.insert(0, fv);
        self.fu.truncate(k);
        self.fv.truncate(k);
    }

    fn push_state(&mut self, next_u: Vec<f64>, next_v: Vec<f64>) -> Result<(), TimestepError> {
        self.step += 1;
        let t1 = self.time();
        check_finite(&next_u, self.step, t1)?;
        check_finite(&next_v, self.step, t1)?;
        self.u.insert(0, next_u);
        self.v.insert(0, next_v);
        self.u.truncate(self.order);
        self.v.truncate(self.order);
        Ok(())
    }

    /// Sets the next state directly, e.g. from an exact solution.
    pub fn advance_to(&mut self, u: Vec<f64>, v: Vec<f64>) -> Result<(), TimestepError> {
        let n = self.rhs.len();
        if u.len() != n || v.len() != n {
            return Err(TimestepError::InvalidArgument(format!("fields must have {n} values")));
        }
        let k = self.order.min(self.u.len());
        self.push_reaction(k);
        self.push_state(u, v)
    }

    /// Advances one step and returns `|du|_inf / dt`.
    pub fn step(&mut self) -> Result<f64, TimestepError> {
        let n = self.rhs.len();
        let k = self.order.min(self.u.len());
        self.push_reaction(k);
        let (a0, a) = bdf_coefficients(k);
        let b = sbdf_explicit(k);
        let dt = self.dt;
        let mut rate = 0.0;
        let mut next_u = vec![0.0; n];
        let mut next_v = vec![0.0; n];
        for (species, (hist, f, solver, next)) in [
            (&self.u, &self.fu, &mut self.su, &mut next_u),
            (&self.v, &self.fv, &mut self.sv, &mut next_v),
        ]
        .into_iter()
        .enumerate()
        {
            let rhs = &mut self.rhs;
            rhs.iter_mut().for_each(|r| *r = 0.0);
            for (bk, fk) in b.iter().zip(f.iter()) {
                rhs.iter_mut().zip(fk).for_each(|(r, x)| *r += dt * bk * x);
            }
            for (ak, uk) in a.iter().zip(hist.iter()) {
                rhs.iter_mut().zip(uk).for_each(|(r, x)| *r -= ak * x);
            }
            solver.solve(a0, rhs, next)?;
            if species == 0 {
                let d = next.iter().zip(&hist[0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                rate = d / dt;
            }
        }
        self.push_state(next_u, next_v)?;
        Ok(rate)
    }
}

/// Runs SBDF of the given order for at most `steps` steps.
pub fn sbdf_run(
    s: &ImexSystem,
    dt: f64,
    steps: usize,
    order: usize,
    opts: &ImexOptions,
) -> Result<ImexTrajectory, TimestepError> {
    let mut it = SbdfIntegrator::new(s, dt, order)?;
    let mut snapshots = Vec::new();
    let snap = |it: &SbdfIntegrator, out: &mut Vec<(Snapshot, Snapshot)>| {
        let mk = |values: &[f64]| Snapshot {
            step: it.steps(),
            t: it.time(),
            values: values.to_vec(),
        };
        out.push((mk(it.u()), mk(it.v())));
    };
    let mut steady = false;
    let mut rate = f64::INFINITY;
    for _ in 0..steps {
        match s.exact {
            Some(exact) if it.steps() + 1 < order => {
                let n = it.u().len();
                let (mut u, mut v) = (vec![0.0; n], vec![0.0; n]);
                exact((it.steps() + 1) as f64 * dt, &mut u, &mut v);
                it.advance_to(u, v)?;
            }
            _ => rate = it.step()?,
        }
        if opts.steady_tol.is_some_and(|tol| rate < tol) {
            steady = true;
        }
        let last = steady || it.steps() == steps;
        if opts.snap_every > 0 && (it.steps() % opts.snap_every == 0 || last) {
            snap(&it, &mut snapshots);
        }
        if steady {
            break;
        }
    }
    Ok(ImexTrajectory {
        u: it.u().to_vec(),
        v: it.v().to_vec(),
        steps: it.steps(),
        t: it.time(),
        steady,
        rate,
        factorizations: it.factorizations(),
        snapshots,
    })
}
