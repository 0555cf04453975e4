use std::fmt;
use std::io;
use std::path::PathBuf;

use sanex_core::Error;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: PathBuf, source: io::Error },
    /// Malformed input file; `line` is 1-based, 0 when unknown.
    Format { path: PathBuf, line: usize, msg: String },
    /// A diagnostic suite ran but did not pass.
    Check(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                Error::ShapeMismatch { .. } => "shape_mismatch",
                Error::NonFinite { .. } => "non_finite",
                Error::InvalidArgument(_) => "invalid_argument",
                Error::InvalidConfig(_) => "invalid_config",
                Error::EmptyBuffer => "empty_buffer",
                Error::StepAfterDone => "step_after_done",
                Error::UnknownEnv(_) => "unknown_env",
                Error::UnknownStrategy(_) => "unknown_strategy",
                Error::NonPositiveVariance { .. } => "non_positive_variance",
                Error::ZeroSigma { .. } => "zero_sigma",
                Error::ZeroDenominator => "zero_denominator",
                Error::MissingGame(_) => "missing_game",
                Error::NotSane => "not_sane",
                Error::NanLoss { .. } => "nan_loss",
            },
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Check(_) => "check_failed",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Format { path, line, msg } => write!(f, "{}:{line}: {msg}", path.display()),
            CliError::Check(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Core(e) => Some(e),
            CliError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
