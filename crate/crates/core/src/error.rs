use std::path::PathBuf;

use thiserror::Error;

use crate::transport::TransportPlan;

pub type Result<T> = std::result::Result<T, LotError>;

#[derive(Debug, Error)]
pub enum LotError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionError { expected: usize, found: usize },

    #[error("invalid marginals: {0}")]
    InvalidMarginals(String),

    #[error("invalid cost matrix: {0}")]
    InvalidCost(String),

    /// Sinkhorn stopped at `max_iters`; `best` is the iterate with the smallest marginal violation.
    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NonConvergence {
        iterations: usize,
        violation: f64,
        best: Box<TransportPlan>,
    },

    #[error(
        "gibbs kernel underflow at lambda = {lambda}; use a larger lambda or the log-domain solver"
    )]
    KernelUnderflow { lambda: f64 },

    #[error("exact solver failed: {0}")]
    SolverFailure(String),

    #[error("embeddings were computed against different references ({0} vs {1})")]
    ReferenceMismatch(String, String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("unknown class label {0:?}")]
    UnknownClass(String),

    #[error("degenerate family: all embedded clouds coincide but the barycenters differ by {0:e}")]
    DegenerateFamily(f64),

    #[error("cloud {index}: {source}")]
    Cloud {
        index: usize,
        #[source]
        source: Box<LotError>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LotError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LotError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        LotError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_cloud(self, index: usize) -> Self {
        LotError::Cloud {
            index,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through per-cloud tags.
    pub fn root_cause(&self) -> &LotError {
        match self {
            LotError::Cloud { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

/// Non-fatal conditions surfaced alongside a result.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notice {
    /// Centered data has fewer independent directions than components requested.
    RankDeficient { rank: usize, components: usize },
    /// The within-class scatter was singular and was shrunk by `gamma * I`.
    SingularWithin { gamma: f64 },
    /// The requested number of components exceeded what the data supports.
    ComponentsClamped { requested: usize, used: usize },
    /// A class had fewer members than folds; folds were assigned without stratification.
    NonStratified { smallest_class: usize, folds: usize },
    /// Fewer training rows than requested folds; the fold count was reduced.
    FoldsReduced { requested: usize, used: usize },
    /// The test split contained no rows; test metrics were not computed.
    EmptyTestSplit,
    /// A fixed-point iteration hit its iteration cap.
    NotConverged {
        iterations: usize,
        displacement: f64,
    },
}
