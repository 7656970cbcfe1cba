//! Ground states of the Gross-Pitaevskii equation
//!
//! ```text
//!     -Δu + W u + ζ|u|²u = λu   in Ω,
//!               u = 0           on ∂Ω,
//!               ∫ u² = 1,
//! ```
//!
//! with a harmonic trap `W(x) = Σ γᵢ xᵢ²` on a box domain `Ω ⊂ ℝᵈ`,
//! `d ∈ {1,2,3}`, discretized with piecewise-linear finite elements.
//!
//! The headline algorithm solves the nonlinear eigenproblem once on the
//! coarsest mesh of a nested hierarchy and then performs a single Newton
//! correction per refinement level, each correction being one linear
//! saddle-point solve.  Total work is proportional to the finest-level
//! unknown count plus the coarse solve.
//!
//! Modules follow the pipeline: [`mesh`] builds nested simplicial meshes,
//! [`assembly`] produces the sparse operators, [`linalg`] solves the linear
//! systems, [`scf`] handles the coarsest-level nonlinear solve, [`newton`]
//! performs one correction step, [`driver`] orchestrates a full run, and
//! [`diagnostics`] computes energies, errors, and convergence orders.

// Indexed loops over parallel slices are the clearest form for the kernels
// here, and `!(x > 0.0)` guards are deliberate: they reject NaN where the
// suggested `x <= 0.0` would accept it.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod field;
pub mod linalg;
pub mod mesh;
pub mod newton;
pub mod quadrature;
pub mod scf;
pub mod sparse;

pub use assembly::{Assemblies, DofMap, Potential, ProblemParams};
pub use diagnostics::{
    energy, error_vs_reference, lambda_energy_gap, observed_order, write_errors_csv,
    write_errors_dat, ErrorRecord,
};
pub use driver::{
    run_direct_all_levels, run_multigrid, write_compare_csv, write_run_csv, MultigridRun,
    RunContext, RunLevel,
};
pub use error::Error;
pub use field::NodalFunction;
pub use linalg::{SaddleSystem, SolverOptions};
pub use mesh::{BoxDomain, LevelHierarchy, Prolongation, SimplexMesh};
pub use newton::{eigen_residual, newton_step, NewtonStepReport};
pub use scf::{solve_ground_state, EigenPair, ScfConfig, ScfTrace};
pub use sparse::{CsrMatrix, SparseSymMatrix, SparsityPattern};

pub type Result<T> = std::result::Result<T, Error>;
