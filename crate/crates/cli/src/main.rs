mod args;
mod output;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use serde::Serialize;
use surfrbf::experiments::{
    generate_node_sets, laplacian_table, laplacian_test, run_convergence, spectrum_report, ConvergenceConfig,
    ExperimentError, ProblemRef, ProblemRegistry,
};
use surfrbf::geometry::{generate_nodes, load_nodes, save_nodes, surface_by_name, GeometryError, NodeSet, SurfaceRef};
use surfrbf::kernels::Kernel;
use surfrbf::linalg::{write_dmat, EigenOptions};
use surfrbf::operators::{default_imq_epsilon, SurfaceOperators};
use surfrbf::reaction::{
    run_spiral, run_turing, turing_preset, ReactionError, RunRecord, SpiralConfig, SpiralParams, TuringConfig,
    TURING_DIFFUSION_RATIO,
};

use args::{Cli, Cmd, ConvergeArgs, EigsArgs, LaplacianArgs, Mode, NodeSource, NodesArgs, SpiralArgs, TuringArgs};
use output::{sha256_file, with_ext, Manifest, Sink};

#[derive(Debug)]
pub enum CliError {
    Clap(clap::Error),
    Usage(String),
    Numerical(String),
    Io(String),
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Clap(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Io(_)
            | GeometryError::Parse { .. }
            | GeometryError::OffSurface { .. }
            | GeometryError::UnknownSurface(_)
            | GeometryError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Geometry(g) => g.into(),
            ExperimentError::InvalidArgument(m) => CliError::Usage(m),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ReactionError> for CliError {
    fn from(e: ReactionError) -> Self {
        match e {
            ReactionError::UnknownPreset(_)
            | ReactionError::UnknownModel(_)
            | ReactionError::EmptyStrip { .. }
            | ReactionError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

fn numerical(e: impl Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match args::parse_from(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(e) => return report(e),
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global() {
            return report(usage(e));
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    let (msg, code) = match e {
        CliError::Clap(e) => {
            if !e.use_stderr() {
                // --help / --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            (text.lines().next().unwrap_or("invalid arguments").to_string(), 2)
        }
        CliError::Usage(m) => (format!("error: {m}"), 2),
        CliError::Numerical(m) => (format!("numerical failure: {m}"), 3),
        CliError::Io(m) => (format!("i/o error: {m}"), 1),
    };
    eprintln!("{msg}");
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let start = Instant::now();
    let threads = rayon::current_num_threads();
    let mut sink = Sink::default();
    let ctx = Ctx {
        start,
        threads,
        cli,
    };
    match &cli.cmd {
        Cmd::Nodes(a) => cmd_nodes(a),
        Cmd::Eigs(a) => cmd_eigs(a, &ctx, &mut sink),
        Cmd::Converge(a) => cmd_converge(a, &ctx, &mut sink),
        Cmd::LaplacianTest(a) => cmd_laplacian(a, &ctx, &mut sink),
        Cmd::Turing(a) => cmd_turing(a, &ctx, &mut sink),
        Cmd::Spiral(a) => cmd_spiral(a, &ctx, &mut sink),
    }
}

struct Ctx<'a> {
    start: Instant,
    threads: usize,
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn manifest<R: Serialize>(&self, name: &str, result: &R, sink: &mut Sink, path: &Path) -> Result<(), CliError> {
        let mut files: Vec<String> = sink.files.iter().map(|p| p.display().to_string()).collect();
        files.push(path.display().to_string());
        let m = Manifest {
            command: name,
            version: env!("CARGO_PKG_VERSION"),
            threads: self.threads,
            config: self.cli,
            result,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            files,
        };
        sink.json(path, &m)
    }
}

fn surface(name: &str) -> Result<SurfaceRef, CliError> {
    Ok(surface_by_name(name)?)
}

fn kernel(spec: Option<&str>, surface: &str) -> Result<Kernel, CliError> {
    match spec {
        Some(s) => Kernel::from_spec(s).map_err(usage),
        None => {
            let eps = default_imq_epsilon(surface)
                .ok_or_else(|| usage(format!("no default kernel for `{surface}`; pass --kernel")))?;
            Kernel::imq(eps).map_err(usage)
        }
    }
}

/// Loads the node file if one is given, otherwise generates nodes.
fn nodes(src: &NodeSource, default_n: usize) -> Result<(SurfaceRef, NodeSet), CliError> {
    let s = surface(&src.surface)?;
    let ns = match &src.nodes {
        Some(path) => load_nodes(path, s.as_ref())?,
        None => generate_nodes(s.as_ref(), src.n.unwrap_or(default_n), src.seed)?,
    };
    Ok((s, ns))
}

fn summary(ns: &NodeSet) -> String {
    let area: f64 = ns.weights.iter().sum();
    format!("N={} h={:.4e} q={:.4e} rho={:.3} area={:.6}", ns.len(), ns.h, ns.q, ns.rho, area)
}

fn cmd_nodes(a: &NodesArgs) -> Result<ExitCode, CliError> {
    let s = surface(&a.surface)?;
    let ns = generate_nodes(s.as_ref(), a.n, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_nodes(&ns, &a.out)?;
    println!("{} {}", a.surface, summary(&ns));
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    surface: &'a str,
    kernel: String,
    n: usize,
    epsilon: f64,
    max_real: f64,
    max_abs: f64,
    conjugate_asymmetry: f64,
    left_half_plane: bool,
    unstable_count: usize,
}

#[derive(Serialize)]
struct DmatSidecar {
    matrix: &'static str,
    rows: usize,
    cols: usize,
    kernel: String,
    surface: String,
    node_file: String,
    node_sha256: String,
    on_surface_tol: f64,
}

/// Relative tolerance for the left-half-plane verdict.
const LHP_TOL: f64 = 1e-6;

fn cmd_eigs(a: &EigsArgs, ctx: &Ctx, sink: &mut Sink) -> Result<ExitCode, CliError> {
    let (_, ns) = nodes(&a.source, 1024)?;
    let k = kernel(a.kernel.as_deref(), &a.source.surface)?;
    if ns.len() > a.cap {
        return Err(usage(format!("N = {} exceeds --cap {}", ns.len(), a.cap)));
    }
    let mut ops = SurfaceOperators::build(&k, &ns).map_err(numerical)?;
    let opts = EigenOptions {
        cap: a.cap,
        ..Default::default()
    };
    let r = spectrum_report(&a.source.surface, &k, ops.laplacian(), opts)?;
    let csv_path = with_ext(&a.out, "csv");
    r.write_csv(sink.create(&csv_path)?).map_err(|e| CliError::Io(e.to_string()))?;
    if a.dump_laplacian {
        let node_file = match &a.source.nodes {
            Some(p) => p.clone(),
            None => {
                let p = with_ext(&a.out, "nodes.csv");
                save_nodes(&ns, &p)?;
                sink.record(&p);
                p
            }
        };
        let dmat = with_ext(&a.out, "dmat");
        write_dmat(ops.laplacian(), &dmat).map_err(|e| CliError::Io(e.to_string()))?;
        sink.record(&dmat);
        let side = DmatSidecar {
            matrix: "laplacian",
            rows: ns.len(),
            cols: ns.len(),
            kernel: k.spec(),
            surface: a.source.surface.clone(),
            node_file: node_file.display().to_string(),
            node_sha256: sha256_file(&node_file)?,
            on_surface_tol: surfrbf::geometry::ON_SURFACE_TOL,
        };
        sink.json(&with_ext(&dmat, "json"), &side)?;
    }
    let s = SpectrumSummary {
        surface: &r.surface,
        kernel: r.kernel.clone(),
        n: r.n,
        epsilon: r.epsilon,
        max_real: r.max_real,
        max_abs: r.max_abs,
        conjugate_asymmetry: r.conjugate_asymmetry,
        left_half_plane: r.left_half_plane(LHP_TOL),
        unstable_count: r.unstable_count(LHP_TOL),
    };
    ctx.manifest("eigs", &s, sink, &with_ext(&a.out, "json"))?;
    println!(
        "{} {} N={} max_re={:.3e} max_abs={:.3e} left_half_plane={}",
        s.surface, s.kernel, s.n, s.max_real, s.max_abs, s.left_half_plane
    );
    Ok(ExitCode::SUCCESS)
}

fn problem(name: Option<&str>, surface: &str, seed: u64) -> Result<ProblemRef, CliError> {
    let reg = ProblemRegistry::with_builtins();
    let p = match name {
        Some(n) => reg.get(n, seed)?,
        None => reg.for_surface(surface, seed)?,
    };
    if p.surface() != surface {
        return Err(usage(format!("problem `{}` lives on `{}`, not `{surface}`", p.name(), p.surface())));
    }
    Ok(p)
}

fn cmd_converge(a: &ConvergeArgs, ctx: &Ctx, sink: &mut Sink) -> Result<ExitCode, CliError> {
    let s = surface(&a.surface)?;
    let k = kernel(Some(&a.kernel), &a.surface)?;
    let p = problem(a.problem.as_deref(), &a.surface, a.seed)?;
    let counts = if a.n.is_empty() {
        match a.surface.as_str() {
            "torus" => vec![500, 1000, 2000],
            _ => vec![256, 576, 1024, 2025],
        }
    } else {
        a.n.clone()
    };
    if counts.len() < 3 {
        return Err(usage("at least three node counts are required"));
    }
    let sets = generate_node_sets(s.as_ref(), &counts, a.seed)?;
    let table = match a.mode {
        Mode::Laplacian => laplacian_table(p.as_ref(), &k, &sets)?,
        Mode::Diffusion => {
            let cfg = ConvergenceConfig {
                dt: a.dt,
                t_end: a.tend,
                startup: a.startup.into(),
                delta: 1.0,
            };
            run_convergence(p.as_ref(), &k, &sets, &cfg)?
        }
    };
    let csv_path = with_ext(&a.out, "csv");
    table
        .write_csv(sink.create(&csv_path)?)
        .map_err(|e| CliError::Io(e.to_string()))?;
    ctx.manifest("converge", &table, sink, &with_ext(&a.out, "json"))?;
    for r in &table.rows {
        match &r.error {
            None => println!("N={:5} h={:.4e} l2={:.4e} linf={:.4e}", r.n, r.h, r.l2, r.linf),
            Some(e) => println!("N={:5} failed: {e}", r.n),
        }
    }
    let fmt = |o: Option<f64>| o.map_or("n/a".to_string(), |x| format!("{x:.2}"));
    println!("order l2={} linf={}", fmt(table.order_l2), fmt(table.order_linf));
    Ok(if table.all_ok() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn cmd_laplacian(a: &LaplacianArgs, ctx: &Ctx, sink: &mut Sink) -> Result<ExitCode, CliError> {
    let (_, ns) = nodes(&a.source, 1024)?;
    let k = kernel(Some(&a.kernel), &a.source.surface)?;
    let p = problem(a.problem.as_deref(), &a.source.surface, a.source.seed)?;
    let r = laplacian_test(p.as_ref(), &k, &ns)?;
    if let Some(out) = &a.out {
        ctx.manifest("laplacian-test", &r, sink, out)?;
    }
    println!("{} {} N={} l2={:.4e} linf={:.4e}", p.name(), k.spec(), r.n, r.l2, r.linf);
    Ok(ExitCode::SUCCESS)
}

fn write_run(
    name: &str,
    rec: &RunRecord,
    ns: &NodeSet,
    out: &Path,
    ctx: &Ctx,
    sink: &mut Sink,
) -> Result<(), CliError> {
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    let mut diag = sink.create(&out.join("diagnostics.csv"))?;
    writeln!(diag, "step,t,rate,u_min,u_max,u_std")?;
    for d in &rec.diagnostics {
        writeln!(diag, "{},{},{:.6e},{:.6e},{:.6e},{:.6e}", d.step, d.t, d.rate, d.u_min, d.u_max, d.u_std)?;
    }
    diag.flush()?;
    drop(diag);
    let mut index = Vec::new();
    for (u, v) in &rec.snapshots {
        let path = out.join(format!("snap_{:07}.ply", u.step));
        sink.ply(&path, ns, &u.values, &v.values)?;
        index.push(BTreeMap::from([
            ("step", serde_json::json!(u.step)),
            ("t", serde_json::json!(u.t)),
            ("file", serde_json::json!(path.display().to_string())),
        ]));
    }
    sink.ply(&out.join("final.ply"), ns, &rec.u, &rec.v)?;
    #[derive(Serialize)]
    struct Result<'a> {
        record: &'a RunRecord,
        snapshots: Vec<BTreeMap<&'static str, serde_json::Value>>,
    }
    ctx.manifest(
        name,
        &Result {
            record: rec,
            snapshots: index,
        },
        sink,
        &out.join("run.json"),
    )
}

fn cmd_turing(a: &TuringArgs, ctx: &Ctx, sink: &mut Sink) -> Result<ExitCode, CliError> {
    let preset = turing_preset(&a.preset)?;
    let (_, ns) = nodes(&a.source, 2000)?;
    let k = kernel(a.kernel.as_deref(), &a.source.surface)?;
    let mut params = preset.params;
    if let Some(dv) = a.delta_v {
        params.delta_v = dv;
        params.delta_u = TURING_DIFFUSION_RATIO * dv;
    }
    let cfg = TuringConfig {
        dt: a.dt,
        max_steps: a.max_steps,
        steady_tol: a.steady_tol,
        seed: a.source.seed,
        halfwidth: a.halfwidth,
        snap_every: a.snap_every,
        ..Default::default()
    };
    let rec = run_turing(&a.source.surface, &k, &ns, &params, Some(&preset), &cfg)?;
    write_run("turing", &rec, &ns, &a.out, ctx, sink)?;
    println!(
        "turing {} N={} steps={} t={:.2} steady={} std(u)={:.4e} sign_changes={}",
        a.preset,
        rec.n,
        rec.steps,
        rec.t_final,
        rec.steady,
        rec.pattern.u_std,
        rec.pattern.sign_changes
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_spiral(a: &SpiralArgs, ctx: &Ctx, sink: &mut Sink) -> Result<ExitCode, CliError> {
    let (_, ns) = nodes(&a.source, 2000)?;
    let k = kernel(a.kernel.as_deref(), &a.source.surface)?;
    let base = SpiralParams::for_surface(&a.source.surface);
    let params = SpiralParams {
        a: a.a.unwrap_or(base.a),
        b: a.b.unwrap_or(base.b),
        alpha: a.alpha.unwrap_or(base.alpha),
        delta_u: a.delta_u.unwrap_or(base.delta_u),
        delta_v: a.delta_v.unwrap_or(base.delta_v),
    };
    let cfg = SpiralConfig {
        dt: a.dt,
        t_end: a.tend,
        probe_count: a.probes,
        snap_every: a.snap_every,
        ..Default::default()
    };
    let rec = run_spiral(&a.source.surface, &k, &ns, &params, &cfg)?;
    write_run("spiral", &rec, &ns, &a.out, ctx, sink)?;
    let w = rec.waves.as_ref().expect("spiral runs record wave statistics");
    println!(
        "spiral N={} steps={} t={:.2} u in [{:.4}, {:.4}] probe variance mean={:.4e} min={:.4e}",
        rec.n,
        rec.steps,
        rec.t_final,
        w.u_min,
        w.u_max,
        w.mean_variance(),
        w.min_variance()
    );
    Ok(ExitCode::SUCCESS)
}
