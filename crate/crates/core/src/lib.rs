pub mod experiments;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod reaction;
pub mod timestepping;
