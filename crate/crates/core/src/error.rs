//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = CoreError> = std::result::Result<T, E>;

/// Errors raised by the numeric kernels.
///
/// Diagnostic magnitudes are carried as `f64` regardless of the working
/// scalar so the enum stays object-safe and serializable.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Input matrix is not symmetric within the construction tolerance.
    #[error("matrix is not symmetric: max relative asymmetry {max_asym:.3e}")]
    NotSymmetric { max_asym: f64 },

    /// The imaginary part of the period matrix is not positive definite.
    #[error("imaginary part of the period matrix is not positive definite")]
    NotPositiveDefinite,

    /// Dimension of an argument does not match the period matrix.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An evaluation plan was built for a different period matrix.
    #[error("evaluation plan was built for a different period matrix")]
    PlanMismatch,

    /// A derivative of higher order than supported was requested.
    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    OrderExceeded { requested: usize, max: usize },

    /// All Kummer coordinates vanished numerically (evaluation failure).
    #[error("all Kummer coordinates below 1e-13: evaluation failure")]
    AllZero,

    /// A least-squares fit received fewer samples than unknowns require.
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    /// Design matrix numerically rank-deficient; enlarge the sample set.
    #[error("design matrix numerically rank-deficient (sv ratio {sv_ratio:.3e})")]
    RankDeficient { sv_ratio: f64 },

    /// Order-by-order continuation stalled: the formal curve does not extend.
    #[error("continuation diverged at order {order}: residual {residual:.3e}")]
    DivergedInduction {
        order: usize,
        residual: f64,
        /// Residuals of the orders that did complete (starting at order 2).
        completed: Vec<f64>,
    },

    /// No optimizer start produced an admissible solution.
    #[error("no convergence: best admissible residual {best:.3e} above {threshold:.3e}")]
    NoConvergence { best: f64, threshold: f64 },

    /// The residual map returned a non-finite value.
    #[error("non-finite residual encountered at parameter index {index}")]
    NonFiniteResidual { index: usize },

    /// Newton located fewer divisor points than requested.
    #[error("found {found} divisor points, {requested} requested")]
    InsufficientRoots { found: usize, requested: usize },

    /// Malformed matrix or configuration file.
    #[error("invalid input file: {reason}")]
    InvalidFile { reason: String },

    /// I/O failure while reading or writing an interface file.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure for an interface file.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
