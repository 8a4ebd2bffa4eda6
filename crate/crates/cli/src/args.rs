use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use surfrbf::timestepping::Startup;

use crate::CliError;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "surfrbf",
    version,
    about = "Kernel differentiation matrices and PDE solvers on closed surfaces"
)]
pub struct Cli {
    /// JSON object of flag values for the subcommand; command-line flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmd {
    /// Generate a quasi-uniform node set and save it as CSV
    Nodes(NodesArgs),
    /// Eigenvalues of the discrete Laplace-Beltrami matrix
    Eigs(EigsArgs),
    /// Convergence table for forced diffusion or the bare Laplacian
    Converge(ConvergeArgs),
    /// Turing pattern formation run
    Turing(TuringArgs),
    /// Excitable-medium spiral wave run
    Spiral(SpiralArgs),
    /// Apply the discrete Laplacian to an analytic field and report errors
    LaplacianTest(LaplacianArgs),
}

/// Where the nodes come from: a file, or generated from `--n` and `--seed`.
#[derive(Debug, Args, Serialize)]
pub struct NodeSource {
    /// sphere | torus | rbc | cyclide | bretzel2
    #[arg(long)]
    pub surface: String,

    /// Node CSV (x,y,z[,nx,ny,nz[,w]]); overrides --n
    #[arg(long, value_name = "FILE")]
    pub nodes: Option<PathBuf>,

    /// Node count when generating
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct NodesArgs {
    #[arg(long)]
    pub surface: String,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Output CSV
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EigsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: NodeSource,

    /// Kernel spec, e.g. `imq:eps=2.8` (default: IMQ with the surface's shape parameter)
    #[arg(long)]
    pub kernel: Option<String>,

    /// Largest N accepted by the eigensolver
    #[arg(long, default_value_t = surfrbf::linalg::DEFAULT_EIGEN_CAP)]
    pub cap: usize,

    /// Also dump L as `<out>.dmat` with a JSON sidecar
    #[arg(long)]
    pub dump_laplacian: bool,

    /// Output prefix; writes `<out>.csv` and `<out>.json`
    #[arg(long, value_name = "PREFIX")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Diffusion,
    Laplacian,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartupArg {
    Exact,
    BdfRamp,
}

impl From<StartupArg> for Startup {
    fn from(s: StartupArg) -> Self {
        match s {
            StartupArg::Exact => Startup::Exact,
            StartupArg::BdfRamp => Startup::BdfRamp,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub surface: String,

    #[arg(long, default_value = "matern:nu=4,eps=4")]
    pub kernel: String,

    /// Comma-separated node counts (default: 256,576,1024,2025 on the sphere, 500,1000,2000 on the torus)
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,

    /// Test problem (default: the surface's analytic problem)
    #[arg(long)]
    pub problem: Option<String>,

    #[arg(long, value_enum, default_value_t = Mode::Diffusion)]
    pub mode: Mode,

    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,

    #[arg(long, default_value_t = 0.2)]
    pub tend: f64,

    #[arg(long, value_enum, default_value_t = StartupArg::Exact)]
    pub startup: StartupArg,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Output prefix; writes `<out>.csv` and `<out>.json`
    #[arg(long, value_name = "PREFIX")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LaplacianArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: NodeSource,

    #[arg(long, default_value = "matern:nu=4,eps=4")]
    pub kernel: String,

    /// Analytic field (default: the surface's test problem)
    #[arg(long)]
    pub problem: Option<String>,

    /// Optional JSON report
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TuringArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: NodeSource,

    #[arg(long)]
    pub kernel: Option<String>,

    /// rbc-spots | rbc-stripes | sphere-spots | sphere-stripes | cyclide-spots |
    /// cyclide-stripes | bretzel2-spots | bretzel2-stripes
    #[arg(long, default_value = "rbc-spots")]
    pub preset: String,

    /// Override the preset's inhibitor diffusivity (activator follows at 0.516x)
    #[arg(long)]
    pub delta_v: Option<f64>,

    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,

    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,

    #[arg(long, default_value_t = 1e-4)]
    pub steady_tol: f64,

    /// Initial strip half-width as a fraction of the z-extent
    #[arg(long, default_value_t = 0.05)]
    pub halfwidth: f64,

    /// Snapshot cadence in steps (0 disables)
    #[arg(long, default_value_t = 0)]
    pub snap_every: usize,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SpiralArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: NodeSource,

    #[arg(long)]
    pub kernel: Option<String>,

    #[arg(long)]
    pub a: Option<f64>,

    #[arg(long)]
    pub b: Option<f64>,

    #[arg(long)]
    pub alpha: Option<f64>,

    /// Default: 1.5 (2 pi / 50)^2, or 2.5 (2 pi / 50)^2 on the cyclide
    #[arg(long)]
    pub delta_u: Option<f64>,

    #[arg(long)]
    pub delta_v: Option<f64>,

    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,

    #[arg(long, default_value_t = 45.0)]
    pub tend: f64,

    #[arg(long, default_value_t = 10)]
    pub probes: usize,

    #[arg(long, default_value_t = 0)]
    pub snap_every: usize,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn scalar(key: &str, v: &serde_json::Value) -> Result<String, CliError> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        _ => Err(CliError::Usage(format!("config key `{key}` must be a string or number"))),
    }
}

/// Parses argv, then re-parses with values from `--config` appended for
/// every flag not given on the command line.
pub fn parse_from(argv: Vec<OsString>) -> Result<Cli, CliError> {
    // Required flags may come from the config file, so the first pass is lenient.
    let lenient = Cli::command().mut_subcommands(|s| s.mut_args(|a| a.required(false)));
    let matches = lenient.try_get_matches_from(&argv)?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Ok(Cli::try_parse_from(&argv)?);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let json: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let obj = json
        .as_object()
        .ok_or_else(|| CliError::Usage("config must be a JSON object".into()))?;

    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let root = Cli::command();
    let subcmd = root.find_subcommand(name).expect("parsed subcommand exists");
    let mut argv = argv;
    for (key, value) in obj {
        let id = key.replace('-', "_");
        if id == "config" {
            return Err(CliError::Usage("config files cannot nest `config`".into()));
        }
        let global = id == "threads";
        let known = subcmd.get_arguments().any(|a| a.get_id() == id.as_str());
        if !known && !global {
            return Err(CliError::Usage(format!("unknown config key `{key}` for `{name}`")));
        }
        let given = if global { &matches } else { sub };
        if given.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{}", id.replace('_', "-"));
        match value {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => argv.push(flag.into()),
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(|x| scalar(key, x)).collect::<Result<Vec<_>, _>>()?;
                argv.push(flag.into());
                argv.push(parts.join(",").into());
            }
            other => {
                argv.push(flag.into());
                argv.push(scalar(key, other)?.into());
            }
        }
    }
    Ok(Cli::try_parse_from(argv)?)
}
