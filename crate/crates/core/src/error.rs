use thiserror::Error;

/// Errors surfaced by the library.
///
/// Budget-style variants (`SizeOverflow`, `AtomBudgetExceeded`,
/// `GridBudgetExceeded`, `TauUnderflow`) signal that a computation was
/// aborted before exhausting memory or time; callers can coarsen the
/// offending parameter and retry.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate IFS: {0}")]
    DegenerateIfs(String),

    #[error("map {index} has contraction ratio {lambda}, not in (0,1) by absolute value")]
    NonContraction { index: usize, lambda: f64 },

    #[error("bad weight vector: {0}")]
    BadWeights(String),

    #[error("tau = {0} out of range (0,1)")]
    TauOutOfRange(f64),

    #[error("size overflow: {what} would need {needed} items (cap {cap})")]
    SizeOverflow {
        what: &'static str,
        needed: u128,
        cap: usize,
    },

    #[error("point {value} (atom {index}) outside curve domain [{lo}, {hi}]")]
    DomainViolation {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: {context} (got {got}, expected {expected})")]
    DimMismatch {
        context: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("atom budget exceeded: convolution needs more than {budget} atoms")]
    AtomBudgetExceeded { budget: usize },

    #[error("grid budget exceeded: region scan needs {needed} cells (budget {budget})")]
    GridBudgetExceeded { needed: u128, budget: u64 },

    #[error("need at least {min} scales, got {got}")]
    InsufficientScales { got: usize, min: usize },

    #[error("dyadic level {0} out of range [0, {max}]", max = crate::moments::MAX_LEVEL)]
    LevelOutOfRange(u32),

    #[error(
        "tau underflow: transform tolerance {tol} at frequency {theta} needs more than {budget} atoms"
    )]
    TauUnderflow { tol: f64, theta: f64, budget: usize },

    #[error("curve determinant vanishes identically (curve lies in a proper affine subspace)")]
    IdenticallyZero,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that mean "a configured budget was hit", as opposed
    /// to invalid inputs.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::SizeOverflow { .. }
                | Error::AtomBudgetExceeded { .. }
                | Error::GridBudgetExceeded { .. }
                | Error::TauUnderflow { .. }
        )
    }
}
