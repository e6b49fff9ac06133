use std::fmt;

use workzone_core::eval::EvalError;
use workzone_core::ingest::IngestError;
use workzone_core::model::ModelError;
use workzone_core::scenario::ScenarioError;
use workzone_core::spacetime::SpacetimeError;
use workzone_core::train::TrainError;

/// Process exit classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad flags or configuration.
    Usage,
    /// Missing, malformed or inconsistent input data.
    Data,
    /// Non-finite values or a failed gradient check.
    Numeric,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Usage => 1,
            FailureKind::Data => 2,
            FailureKind::Numeric => 3,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: FailureKind, error: impl Into<anyhow::Error>) -> Self {
        Self { kind, error: error.into() }
    }

    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self::new(FailureKind::Usage, error)
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self::new(FailureKind::Data, error)
    }

    pub fn numeric(error: impl Into<anyhow::Error>) -> Self {
        Self::new(FailureKind::Numeric, error)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self { kind: self.kind, error: self.error.context(what) }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::CorpusTooSmall(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<SpacetimeError> for Failure {
    fn from(e: SpacetimeError) -> Self {
        match e {
            SpacetimeError::Canvas(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => Failure::usage(e),
            ModelError::Input(_) => Failure::data(e),
            ModelError::Numerics(_) | ModelError::Numeric(_) => Failure::numeric(e),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::usage(e),
            TrainError::NonFinite { .. } => Failure::numeric(e),
            TrainError::Model(m) => m.into(),
            TrainError::EmptySplit(_) | TrainError::Checkpoint { .. } | TrainError::Io { .. } => Failure::data(e),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::data(e)
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::data(e)
    }
}
