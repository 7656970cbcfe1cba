//! Error type shared by all modules.

/// Errors reported by mesh construction, assembly, and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument is outside the supported range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Vector or matrix sizes do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A mesh-level tag does not match the level the data was built on.
    #[error("level mismatch: expected level {expected}, got {got}")]
    LevelMismatch { expected: usize, got: usize },

    /// A cell with non-positive volume was encountered.
    #[error("degenerate cell {cell}: signed volume {volume:.3e}")]
    DegenerateCell { cell: usize, volume: f64 },

    /// An iterative solver hit its iteration cap.
    #[error(
        "solver stopped after {iters} iterations with residual {residual:.3e} (tol {tol:.3e})"
    )]
    NoConvergence {
        iters: usize,
        residual: f64,
        tol: f64,
    },

    /// Conjugate gradients met a direction of non-positive curvature.
    #[error("operator is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The saddle-point factorization or iteration broke down.
    #[error("saddle-point solve failed: {0}; retry with a tighter coarse residual_tol")]
    SaddleBreakdown(String),

    /// The coarse nonlinear solve ran out of iterations.  The last iterate
    /// is returned so a caller may restart from it.
    #[error("coarse solve exceeded {iters} iterations (last residual {residual:.3e})")]
    ScfStalled {
        iters: usize,
        residual: f64,
        last: Box<crate::scf::EigenPair>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
