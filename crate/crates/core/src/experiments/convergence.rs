use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{discrete_norms, fit_order, ExperimentError, TestProblem};
use crate::geometry::{generate_nodes, NodeSet, Surface};
use crate::kernels::Kernel;
use crate::operators::SurfaceOperators;
use crate::timestepping::{bdf4_run, DiffusionProblem, Startup};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub dt: f64,
    pub t_end: f64,
    pub startup: Startup,
    pub delta: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 0.2,
            startup: Startup::Exact,
            delta: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMode {
    /// `L u(0)` against the analytic surface Laplacian.
    Laplacian,
    /// BDF4 solution at `t_end` against the exact solution.
    Diffusion,
}

/// One table row; `l2`/`linf` are NaN and `error` is set when the row failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub rho: f64,
    pub l2: f64,
    pub linf: f64,
    pub cond: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl ConvergenceRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub mode: TableMode,
    pub problem: String,
    pub surface: String,
    pub kernel: String,
    pub config: Option<ConvergenceConfig>,
    pub rows: Vec<ConvergenceRow>,
    pub order_l2: Option<f64>,
    pub order_linf: Option<f64>,
}

impl ConvergenceTable {
    fn new(
        mode: TableMode,
        problem: &dyn TestProblem,
        kernel: &Kernel,
        config: Option<ConvergenceConfig>,
        rows: Vec<ConvergenceRow>,
    ) -> Self {
        let good: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.ok()).collect();
        let counts: Vec<usize> = good.iter().map(|r| r.n).collect();
        let l2: Vec<f64> = good.iter().map(|r| r.l2).collect();
        let linf: Vec<f64> = good.iter().map(|r| r.linf).collect();
        Self {
            mode,
            problem: problem.name().to_string(),
            surface: problem.surface().to_string(),
            kernel: kernel.spec(),
            config,
            order_l2: fit_order(&counts, &l2),
            order_linf: fit_order(&counts, &linf),
            rows,
        }
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ConvergenceRow::ok)
    }

    pub fn row(&self, n: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// `N,h,l2,linf`, one line per row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["N", "h", "l2", "linf"])?;
        for r in &self.rows {
            out.write_record([
                r.n.to_string(),
                format!("{:.16e}", r.h),
                format!("{:.16e}", r.l2),
                format!("{:.16e}", r.linf),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Riesz node sets for each count, seeded identically.
pub fn generate_node_sets(s: &dyn Surface, counts: &[usize], seed: u64) -> Result<Vec<NodeSet>, ExperimentError> {
    counts.iter().map(|&n| Ok(generate_nodes(s, n, seed)?)).collect()
}

fn sample(ns: &NodeSet, f: impl Fn(crate::geometry::Vec3) -> Result<f64, ExperimentError>) -> Result<Vec<f64>, ExperimentError> {
    ns.points.iter().map(|&x| f(x)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacianReport {
    pub n: usize,
    pub l2: f64,
    pub linf: f64,
    pub cond: Option<f64>,
}

/// Applies `L` to the sampled solution at `t = 0` and compares with the
/// analytic surface Laplacian.
pub fn laplacian_test(problem: &dyn TestProblem, kernel: &Kernel, ns: &NodeSet) -> Result<LaplacianReport, ExperimentError> {
    let reference = sample(ns, |x| problem.laplacian(0.0, x))?;
    let u = sample(ns, |x| Ok(problem.solution(0.0, x)))?;
    let mut ops = SurfaceOperators::build(kernel, ns)?;
    let lu = ops.apply_laplacian(&u)?;
    let err: Vec<f64> = lu.iter().zip(&reference).map(|(a, b)| a - b).collect();
    let (l2, linf) = discrete_norms(&err, &reference, &ns.weights)?;
    Ok(LaplacianReport {
        n: ns.len(),
        l2,
        linf,
        cond: ops.cond_estimate(),
    })
}

fn row_from(ns: &NodeSet, start: Instant, res: Result<(f64, f64, Option<f64>), ExperimentError>) -> ConvergenceRow {
    let (l2, linf, cond, error) = match res {
        Ok((l2, linf, cond)) => (l2, linf, cond, None),
        Err(e) => (f64::NAN, f64::NAN, None, Some(e.to_string())),
    };
    ConvergenceRow {
        n: ns.len(),
        h: ns.h,
        rho: ns.rho,
        l2,
        linf,
        cond,
        seconds: start.elapsed().as_secs_f64(),
        error,
    }
}

fn check_sets(sets: &[NodeSet]) -> Result<(), ExperimentError> {
    if sets.windows(2).any(|w| w[0].len() >= w[1].len()) {
        return Err(ExperimentError::InvalidArgument("node counts must be strictly increasing".into()));
    }
    Ok(())
}

/// Laplacian-only convergence table; failed rows are recorded, not fatal.
pub fn laplacian_table(
    problem: &dyn TestProblem,
    kernel: &Kernel,
    sets: &[NodeSet],
) -> Result<ConvergenceTable, ExperimentError> {
    check_sets(sets)?;
    let rows = sets
        .iter()
        .map(|ns| {
            let start = Instant::now();
            let res = laplacian_test(problem, kernel, ns).map(|r| (r.l2, r.linf, r.cond));
            row_from(ns, start, res)
        })
        .collect();
    Ok(ConvergenceTable::new(TableMode::Laplacian, problem, kernel, None, rows))
}

fn diffusion_row(
    problem: &dyn TestProblem,
    kernel: &Kernel,
    ns: &NodeSet,
    cfg: &ConvergenceConfig,
) -> Result<(f64, f64, Option<f64>), ExperimentError> {
    // surfaces guard errors before the run, so the stepper's closure can be total
    sample(ns, |x| problem.forcing(0.0, x))?;
    let ops = SurfaceOperators::build(kernel, ns)?;
    let cond = ops.cond_estimate();
    let l = ops.into_laplacian();
    let pts = &ns.points;
    let forcing = |t: f64, out: &mut [f64]| {
        for (o, &x) in out.iter_mut().zip(pts) {
            *o = problem.forcing(t, x).unwrap_or(f64::NAN);
        }
    };
    let exact = |t: f64, out: &mut [f64]| {
        for (o, &x) in out.iter_mut().zip(pts) {
            *o = problem.solution(t, x);
        }
    };
    let p = DiffusionProblem {
        l: &l,
        delta: cfg.delta,
        forcing: Some(&forcing),
        u0: pts.iter().map(|&x| problem.solution(0.0, x)).collect(),
        exact: Some(&exact),
    };
    let tr = bdf4_run(&p, cfg.dt, cfg.t_end, cfg.startup, 0)?;
    let mut reference = vec![0.0; ns.len()];
    exact(tr.t, &mut reference);
    let err: Vec<f64> = tr.u.iter().zip(&reference).map(|(a, b)| a - b).collect();
    let (l2, linf) = discrete_norms(&err, &reference, &ns.weights)?;
    Ok((l2, linf, cond))
}

/// Forced-diffusion convergence table: BDF4 to `t_end` on each node set.
pub fn run_convergence(
    problem: &dyn TestProblem,
    kernel: &Kernel,
    sets: &[NodeSet],
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceTable, ExperimentError> {
    check_sets(sets)?;
    if cfg.delta != 1.0 {
        // the manufactured forcing assumes unit diffusivity
        return Err(ExperimentError::InvalidArgument(format!(
            "test problems assume delta = 1, got {}",
            cfg.delta
        )));
    }
    let rows = sets
        .iter()
        .map(|ns| {
            let start = Instant::now();
            row_from(ns, start, diffusion_row(problem, kernel, ns, cfg))
        })
        .collect();
    Ok(ConvergenceTable::new(TableMode::Diffusion, problem, kernel, Some(*cfg), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{SphereGaussians, SphereHarmonic};
    use crate::geometry::UnitSphere;

    #[test]
    fn harmonic_laplacian_and_diffusion() {
        let sets = generate_node_sets(&UnitSphere, &[150, 300], 3).unwrap();
        let k = Kernel::imq(2.8).unwrap();
        let t = laplacian_table(&SphereHarmonic, &k, &sets).unwrap();
        assert!(t.all_ok());
        assert!(t.rows[1].l2 < t.rows[0].l2, "{:?}", t.rows);
        assert!(t.order_l2.unwrap() > 1.0);
        let cfg = ConvergenceConfig {
            t_end: 0.05,
            ..Default::default()
        };
        let d = run_convergence(&SphereHarmonic, &k, &sets, &cfg).unwrap();
        assert!(d.all_ok());
        assert!(d.rows[1].l2 < 0.05, "{:?}", d.rows);
        let mut csv = Vec::new();
        d.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("N,h,l2,linf\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn guard_failure_marks_row_not_table() {
        let sets = generate_node_sets(&UnitSphere, &[60], 1).unwrap();
        let problem = SphereGaussians {
            centers: vec![sets[0].points[7]],
        };
        let t = laplacian_table(&problem, &Kernel::imq(2.0).unwrap(), &sets).unwrap();
        assert!(!t.all_ok());
        assert!(t.rows[0].l2.is_nan());
        assert!(t.rows[0].error.as_deref().unwrap().contains("centre"));
        assert_eq!(t.order_l2, None);
    }

    #[test]
    fn counts_must_increase() {
        let sets = generate_node_sets(&UnitSphere, &[40, 40], 1).unwrap();
        assert!(laplacian_table(&SphereHarmonic, &Kernel::imq(2.0).unwrap(), &sets).is_err());
    }
}
