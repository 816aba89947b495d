use thiserror::Error;

/// Errors raised across the library.
///
/// The variants map onto the CLI exit-code contract: `Usage` and `Config`
/// are configuration problems (exit 2), `Numeric` and `SingularRegression`
/// are numeric failures (exit 3), and `Degenerate` marks a diagnostic whose
/// inputs carry no signal (exit 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("regression matrix is numerically singular at step {step} (condition {condition:e}); use a positive ridge")]
    SingularRegression { step: usize, condition: f64 },

    #[error("generator error: {message} at t={t}, y={y:?}")]
    Generator {
        message: String,
        t: f64,
        y: Vec<f64>,
    },

    #[error("degenerate diagnostic: {0}")]
    Degenerate(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numeric {
            message: msg.into(),
            residual,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
