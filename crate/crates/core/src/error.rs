use thiserror::Error;

/// Errors raised by the copula, fitting, and testing routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of a function (e.g. `u` on the boundary).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter is invalid (e.g. `theta <= 0`).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Not enough observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A matrix that must be inverted is singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Inconsistent or out-of-range configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    /// Malformed input file; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A failure inside one stage of a multi-stage procedure.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for I/O and parse failures, false for statistical-procedure failures.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io(_) | Error::Parse { .. } => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches a stage label to the error of a `Result`.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
