use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid command: {0}")]
    InvalidCommand(String),

    #[error("clock at minute {clock} is past the horizon of {horizon} minutes")]
    HorizonExceeded { clock: u32, horizon: u32 },

    #[error("not a conflict: {0}")]
    NotAConflict(String),

    #[error("no viable candidate: every candidate has zero mitigation utility")]
    NoViableCandidate,

    #[error("affordance inapplicable: {0}")]
    AffordanceInapplicable(String),

    #[error("no target: no merchant is under attack")]
    NoTarget,

    #[error("sampling failure: {0}")]
    SamplingFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("trial {index} (seed {seed}) failed: {source}")]
    TrialFailed {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, looking through `TrialFailed` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::TrialFailed { source, .. } => source.root(),
            other => other,
        }
    }
}
