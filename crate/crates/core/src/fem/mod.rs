//! Structured 2D Q1 finite elements: mesh, quadrature, assembly, sparse
//! linear solvers and Newton iteration.

pub mod assembly;
pub mod basis;
pub mod field;
pub mod mesh;
pub mod newton;
pub mod solver;
pub mod sparse;

pub use assembly::{
    assemble, assemble_matrix, assemble_vector, load_vector, mass_matrix, stiffness_matrix,
    weighted_mass_matrix, ElementKernel, ElementView, LocalMatrix, LocalVector,
};
pub use basis::ReferenceElement;
pub use field::Field;
pub use mesh::{Rect, StructuredMesh};
pub use newton::{newton_solve, NewtonOptions, NewtonOutcome, NonlinearProblem};
pub use solver::{conjugate_gradient, solve_linear, solve_linear_from, BandedLu, LinearSolver, SolverOptions};
pub use sparse::{CsrMatrix, SparseSystem, SparsityPattern};
