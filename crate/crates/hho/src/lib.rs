//! Mixed-order hybrid high-order (HHO) discretization of the elliptic
//! diffusion problem on 2D triangular meshes, with residual-based
//! a posteriori error estimation and adaptive mesh refinement.
//!
//! Cell unknowns are polynomials of degree `k+1`, face unknowns of degree
//! `k`. The global system is statically condensed onto the face unknowns.

pub mod adapt;
pub mod basis;
pub mod cases;
pub mod estimator;
pub mod local;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod study;
pub mod vtu;

pub use mesh::Mesh;
pub use solver::{Discretization, HhoSolution, ProblemSpec};

/// Errors produced across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("orientation error: {0}")]
    Orientation(String),
    #[error("boundary labeling error: {0}")]
    Labeling(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("problem specification error: {0}")]
    Spec(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("marking error: {0}")]
    Marking(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
