use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid sizes, counts or table indices supplied at construction.
    Config(String),
    /// A caller broke an operation's precondition (length mismatch, bad rank, ...).
    Contract(String),
    /// An iterative or direct solve failed.
    Solver {
        what: String,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    /// Source iteration hit its iteration cap.
    Divergence { iterations: usize, residual: f64 },
    /// DEIM could not pick a point, or the collocation matrix is singular.
    Selection(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn solver(what: impl Into<String>, iterations: usize, residual: f64) -> Self {
        Error::Solver {
            what: what.into(),
            iterations,
            residual,
            history: Vec::new(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Solver {
                what,
                iterations,
                residual,
                ..
            } => write!(
                f,
                "{what} failed after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::Divergence {
                iterations,
                residual,
            } => write!(
                f,
                "source iteration did not converge in {iterations} iterations (last change {residual:.3e})"
            ),
            Error::Selection(msg) => write!(f, "selection error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
