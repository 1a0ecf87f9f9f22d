//! Optimal recovery of harmonic functions on the L-shaped domain from
//! Gaussian measurements.
//!
//! The recovery is a combination of Riesz representers of the measurement
//! functionals in a fractional Sobolev norm on the boundary. Representers
//! are discretely harmonic Q1 functions whose traces solve a fractional
//! diffusion problem on the boundary curve, approximated by sinc quadrature.

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod fractional;
pub mod linalg;
pub mod measurements;
pub mod mesh;
pub mod quadrature;
pub mod recovery;

pub use assembly::{
    assemble_boundary_operators, assemble_interior_load, assemble_stiffness, h1_error, BoundaryOperators,
    ExactSolution, StiffnessBlocks,
};
pub use error::{Error, Result};
pub use experiments::{Case, CaseRow, ExperimentConfig};
pub use fractional::{
    fractional_inverse, sinc_apply, sinc_parameters, spectral_oracle, FractionalExponent, FractionalSolver, SincScheme,
    SpectralOracle,
};
pub use linalg::{DualVector, PrimalVector, SparseMatrix, SpdFactorization};
pub use measurements::{GaussianMeasurement, MeasurementSet};
pub use mesh::{build_lshape_mesh, extract_boundary, point_in_domain, BoundaryMesh, QuadMesh};
pub use recovery::{
    boundary_rhs, discrete_harmonic_extension, gram_and_recover, riesz_representer, riesz_representers, solve_forcing,
    solve_lagrange_multiplier, Discretization, RecoveryResult, RieszRepresenter,
};
