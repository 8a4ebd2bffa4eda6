//! Implicit surfaces, projection, node generation and node-set metrics.

mod grid;
mod io;
mod nodes;
mod surface;
pub mod vec3;

use thiserror::Error;

pub use grid::GridIndex;
pub use io::{load_nodes, save_nodes, ON_SURFACE_TOL};
pub use nodes::{
    decimate_closest, generate_nodes, generate_nodes_with, mesh_stats, normal_at, normals_for,
    project, quadrature_weights, quadrature_weights_with, riesz_descend, riesz_energy,
    riesz_minimize, sample_surface, separation_radius, surface_area, thin, thin_indices,
    thin_to_count, MeshStats, NodeOptions, NodeSet, RieszReport,
};
pub use surface::{
    estimate_area, newton_project, shell_sample, surface_by_name, Aabb, Bretzel2, DupinCyclide,
    RedBloodCell, Surface, SurfaceBuilder, SurfaceRef, SurfaceRegistry, Torus, UnitSphere,
};
pub use vec3::Vec3;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("surface gradient vanishes at {point:?}")]
    GradientVanishes { point: Vec3 },
    #[error("projection did not converge in {iterations} iterations (last step {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("sampling exhausted after {accepted} accepted points")]
    SamplingExhausted { accepted: usize },
    #[error("points {i} and {j} coincide")]
    CoincidentPoints { i: usize, j: usize },
    #[error("unknown surface `{0}`")]
    UnknownSurface(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("node file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("node file line {line}: point is off the surface (distance {residual:.3e})")]
    OffSurface { line: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
