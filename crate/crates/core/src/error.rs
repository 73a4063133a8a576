use std::path::PathBuf;

use trade_autodiff::AutodiffError;

pub type Result<T> = std::result::Result<T, TradeError>;

#[derive(Debug, thiserror::Error)]
pub enum TradeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss}, parameter norm {param_norm:.4e})")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
        param_norm: f64,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl TradeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TradeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            TradeError::Config(_) | TradeError::Unsupported(_) => 2,
            TradeError::Data(_) | TradeError::Parse { .. } | TradeError::Io { .. } | TradeError::Input(_) => 3,
            TradeError::Divergence { .. } => 4,
            TradeError::Checkpoint(_) | TradeError::Autodiff(_) => 1,
        }
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> TradeError {
    TradeError::Config(msg.into())
}

pub(crate) fn data_err(msg: impl Into<String>) -> TradeError {
    TradeError::Data(msg.into())
}
