//! Immersed Crouzeix–Raviart finite elements for elliptic interface problems
//! on unfitted simplicial meshes in two and three dimensions.
//!
//! The pipeline runs mesh → level-set interpolation and cutting → local IFE
//! spaces → lifting-stabilized assembly → CG solve → error norms. The
//! [`experiments`] module wires it together for the built-in problems.

#![allow(clippy::approx_constant)]

pub mod assembly;
pub mod cutgeom;
pub mod error;
pub mod experiments;
pub mod ife_local;
pub mod lifting;
pub mod linalg;
pub mod mesh;
pub mod postproc;
pub mod problems;
pub mod quadrature;
pub mod simplex;

pub use assembly::{assemble_system, assemble_with, AssemblyOptions, Discretization, DofMap, InterfaceFaceRule, SparseSystem};
pub use cutgeom::{
    cut_element, interpolate_levelset, verify_resolution, Classification, CutElement, DiscreteLevelSet, ElementGeometry, LevelSet,
    Side,
};
pub use error::{Error, Result};
pub use experiments::{run_example, run_interpolation_study, run_sliver, ExampleId, RunConfig, SliverConfig, SliverPoint};
pub use ife_local::{ife_basis, ElementCoefficient, IfeBasisSet, PiecewiseAffine};
pub use linalg::{cg_solve, condition_number, CsrMatrix, Preconditioner};
pub use mesh::{build_uniform_mesh, BoxDomain, SimplicialMesh};
pub use postproc::{compute_errors, evaluate_solution, export_vtk, ErrorReport, ErrorRow};
pub use problems::{Coefficient, Example2Shape, ExactSolution, ProblemSpec};
pub use simplex::Point;

/// 3×3 coefficient tensor.
pub type Matrix3 = nalgebra::Matrix3<f64>;
