use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a linear solve for `(I - tau L)` did not produce a usable answer.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveFailureKind {
    /// The iterative solver hit its iteration cap above the residual target.
    Stalled { residual: f64, iterations: usize },
    /// The direct factorization met a (numerically) zero pivot.
    Singular { row: usize, pivot: f64 },
    /// A per-mode spectral divisor vanished.
    SingularMode { mode: usize, divisor: f64 },
    /// The solution contained NaN or infinite values.
    NonFinite,
}

/// A failed implicit solve. Usually means the time step is too large for
/// the given coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveFailure {
    pub kind: SolveFailureKind,
    /// Time index of the failing step, once known.
    pub step: Option<usize>,
}

impl SolveFailure {
    pub fn new(kind: SolveFailureKind) -> Self {
        Self { kind, step: None }
    }

    pub fn at_step(mut self, step: usize) -> Self {
        self.step = Some(step);
        self
    }
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SolveFailureKind::Stalled {
                residual,
                iterations,
            } => write!(
                f,
                "iterative solve stalled at relative residual {residual:.3e} after {iterations} iterations"
            )?,
            SolveFailureKind::Singular { row, pivot } => {
                write!(f, "factorization hit pivot {pivot:.3e} at row {row}")?
            }
            SolveFailureKind::SingularMode { mode, divisor } => {
                write!(f, "spectral divisor {divisor:.3e} at mode {mode}")?
            }
            SolveFailureKind::NonFinite => write!(f, "solution is not finite")?,
        }
        if let Some(step) = self.step {
            write!(f, " (step {step})")?;
        }
        write!(f, "; the time step may be too large")
    }
}

impl std::error::Error for SolveFailure {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid stencil: {0}")]
    InvalidStencil(String),
    #[error("mesh size must be nonzero")]
    ZeroMesh,
    #[error("mesh size {given} does not match the grid mesh {grid}")]
    MeshMismatch { given: f64, grid: f64 },
    #[error("incompatible grids: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient reference resolution: {0}")]
    Resolution(String),
    #[error(transparent)]
    Solve(#[from] SolveFailure),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
