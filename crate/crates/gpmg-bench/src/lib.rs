//! Shared fixtures for the pipeline benchmarks.

use gpmg::{BoxDomain, Potential, ProblemParams, RunContext};

/// Unit-cube problem with unit trap and unit interaction.
pub fn cube_params() -> ProblemParams {
    ProblemParams::new(
        BoxDomain::unit(3).unwrap(),
        Potential::new(vec![1.0, 1.0, 1.0]).unwrap(),
        1.0,
    )
    .unwrap()
}

pub fn cube_context(cells_per_axis: usize, n_levels: usize) -> RunContext {
    RunContext::prepare(&cube_params(), cells_per_axis, n_levels).unwrap()
}
