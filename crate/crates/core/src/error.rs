//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid or incomplete configuration (e.g. an unresolved kernel bandwidth).
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset parse failure, located by line and column (both 1-based).
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("training error: {0}")]
    Train(String),

    /// Training produced a non-finite loss; names the hyperparameter to lower.
    #[error("training diverged at epoch {epoch}: non-finite loss; lower {hyperparameter}")]
    Divergence { epoch: usize, hyperparameter: String },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("solver error: {0}")]
    Solver(String),

    /// External scorer broke the wire protocol; carries the offending payload.
    #[error("protocol error: {message} (raw payload: {payload:?})")]
    Protocol { message: String, payload: String },

    #[error("audit error: {0}")]
    Audit(String),

    #[error("correlation undefined: {0}")]
    CorrelationUndefined(String),

    /// A pipeline stage failed; tags the failure with the stage name.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// An instance-level audit failure, tagged with the instance id.
    #[error("instance {instance}: {source}")]
    Instance {
        instance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn for_instance(self, instance: usize) -> Self {
        Error::Instance {
            instance,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
