use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite loss {value} (parameter norm {param_norm:.6e})")]
    NonFiniteLoss {
        value: f64,
        param_norm: f64,
        /// Parameter state at which the loss became non-finite.
        theta: Box<Vec<f64>>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn non_finite_loss(value: f64, theta: &[f64]) -> Self {
        let param_norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        Error::NonFiniteLoss {
            value,
            param_norm,
            theta: Box::new(theta.to_vec()),
        }
    }
}
