use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("series have different mismatch ratios ({0}); use frequency alignment instead")]
    MultipleMismatch(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("singular design: {message} (dependent columns: {dependent:?})")]
    SingularDesign {
        message: String,
        dependent: Vec<usize>,
    },

    #[error("no multistart run converged: {0}")]
    Convergence(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("loss differential is identically zero")]
    DegenerateComparison,

    #[error("selection error: {0}")]
    Selection(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn alignment(msg: impl Into<String>) -> Self {
        Error::Alignment(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
