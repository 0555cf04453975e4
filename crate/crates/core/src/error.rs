use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes disagree. Shapes are `(rows, cols)`.
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A scalar function returned NaN or infinity while probing `coord`.
    NonFinite { context: &'static str, coord: usize },
    InvalidArgument(String),
    InvalidConfig(String),
    EmptyBuffer,
    StepAfterDone,
    UnknownEnv(String),
    UnknownStrategy(String),
    /// A diagonal Gaussian variance at `index` is zero, negative or NaN.
    NonPositiveVariance { index: usize },
    /// A learned noise scale is exactly zero so its log-determinant is -inf.
    ZeroSigma { context: &'static str, index: usize },
    ZeroDenominator,
    MissingGame(String),
    NotSane,
    NanLoss { step: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                expected,
                found,
            } => write!(
                f,
                "shape mismatch in {context}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NonFinite { context, coord } => {
                write!(f, "non-finite value in {context} at coordinate {coord}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::EmptyBuffer => f.write_str("replay buffer is empty"),
            Error::StepAfterDone => f.write_str("step called on a finished episode"),
            Error::UnknownEnv(name) => write!(f, "unknown environment `{name}`"),
            Error::UnknownStrategy(name) => write!(f, "unknown strategy `{name}`"),
            Error::NonPositiveVariance { index } => {
                write!(f, "variance at index {index} is not positive")
            }
            Error::ZeroSigma { context, index } => {
                write!(f, "zero noise scale in {context} at index {index}: log term is -inf")
            }
            Error::ZeroDenominator => f.write_str("human and random baselines are equal"),
            Error::MissingGame(name) => write!(f, "game `{name}` missing from scores or baselines"),
            Error::NotSane => f.write_str("operation requires a SANE network"),
            Error::NanLoss { step } => write!(f, "batch loss became non-finite at step {step}"),
        }
    }
}

impl core::error::Error for Error {}
