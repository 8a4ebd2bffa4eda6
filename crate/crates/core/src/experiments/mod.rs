//! Convergence studies for forced diffusion and eigenvalue stability scans.

mod convergence;
mod norms;
mod problems;
mod spectrum;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::linalg::LinalgError;
use crate::operators::OperatorError;
use crate::timestepping::TimestepError;

pub use convergence::{
    generate_node_sets, laplacian_table, laplacian_test, run_convergence, ConvergenceConfig, ConvergenceRow,
    ConvergenceTable, LaplacianReport, TableMode,
};
pub use norms::{discrete_norms, fit_order, FIT_ROWS};
pub use problems::{
    sphere_centers, sphere_forcing, sphere_laplacian, sphere_solution, torus_forcing, torus_laplacian,
    torus_solution, ProblemBuilder, ProblemRef, ProblemRegistry, SphereGaussians, SphereHarmonic, TestProblem,
    TorusPolynomial, CENTER_GUARD, SPHERE_CENTER_COUNT,
};
pub use spectrum::{spectrum_report, stability_scan, stability_scan_with, SpectrumReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Timestep(#[from] TimestepError),
    #[error("evaluation point within {theta:.3e} rad of a centre or its antipode")]
    NearCenter { theta: f64 },
    #[error("reference field has zero norm")]
    ZeroReference,
    #[error("{0}")]
    InvalidArgument(String),
}
