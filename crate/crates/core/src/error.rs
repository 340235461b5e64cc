use thiserror::Error;

/// Errors raised anywhere in the pricing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Shapes of matrices, site lists or contract lists disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A maximum-likelihood or composite-likelihood fit did not produce a usable optimum.
    #[error("fit failed: {0}")]
    Fit(String),
    /// Linear algebra or derivative estimation broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The caller combined inputs in an unsupported way.
    #[error("usage error: {0}")]
    Usage(String),
    /// A malformed line in an input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Input data are present but unusable.
    #[error("data error: {0}")]
    Data(String),
    /// Invalid run or study configuration.
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
