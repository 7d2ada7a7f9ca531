use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two tables or vectors disagree on a dimension.
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// A row or vector that should be a probability distribution is not.
    InvalidDistribution { context: &'static str, row: usize },
    InvalidArgument(String),
    NotFinite { context: &'static str },
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        bound: usize,
    },
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
        hint: &'static str,
    },
    Singular { context: &'static str, residual: f64 },
    RankDeficient { context: &'static str },
    EmptyData { context: &'static str },
    /// `log pi` is undefined where the policy has a zero entry.
    ZeroProbability { state: usize, action: usize },
    Divergence { context: &'static str, trace: Vec<f64> },
    /// An oracle failed inside an iterative solver.
    Oracle { iteration: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Shape {
            context,
            expected,
            found,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                context,
                expected,
                found,
            } => write!(f, "{context}: shape mismatch (expected {expected}, found {found})"),
            Error::InvalidDistribution { context, row } => {
                write!(f, "{context}: row {row} is not a probability distribution")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NotFinite { context } => write!(f, "{context}: non-finite value"),
            Error::IndexOutOfRange {
                context,
                index,
                bound,
            } => write!(f, "{context}: index {index} out of range (< {bound})"),
            Error::NoConvergence {
                context,
                iterations,
                residual,
                hint,
            } => {
                write!(
                    f,
                    "{context}: no convergence after {iterations} iterations (last residual {residual:e})"
                )?;
                if !hint.is_empty() {
                    write!(f, "; {hint}")?;
                }
                Ok(())
            }
            Error::Singular { context, residual } => {
                write!(f, "{context}: linear system is singular (residual {residual:e})")
            }
            Error::RankDeficient { context } => write!(
                f,
                "{context}: normal equations are rank deficient; use a ridge penalty lambda > 0"
            ),
            Error::EmptyData { context } => write!(f, "{context}: empty data"),
            Error::ZeroProbability { state, action } => write!(
                f,
                "policy has zero probability at state {state}, action {action}; floor the policy before taking logs"
            ),
            Error::Divergence { context, trace } => write!(
                f,
                "{context}: optimization diverged after {} steps (last loss {:?})",
                trace.len(),
                trace.last()
            ),
            Error::Oracle { iteration, source } => {
                write!(f, "oracle failed at iteration {iteration}: {source}")
            }
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Oracle { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
