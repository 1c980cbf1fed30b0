use thiserror::Error;

/// Errors raised by the simulator and its solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: `{key}` {reason}")]
    Config { key: String, reason: String },

    #[error("failed to parse configuration: {0}")]
    Parse(String),

    #[error("beamformer for user {user} is degenerate (projected norm {norm:.3e})")]
    DegenerateBeam { user: usize, norm: f64 },

    #[error("BS {bs} cannot satisfy its resource constraints even with every service removed")]
    InfeasibleState { bs: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_slot(self, slot: usize) -> Self {
        Error::Slot {
            slot,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
