use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    // graph
    #[error("graph is not a DAG")]
    NotADag,
    #[error("graphs have different node counts ({0} vs {1})")]
    NodeCountMismatch(usize, usize),
    #[error("no separating set recorded for non-adjacent pair ({0}, {1})")]
    MissingSepSet(usize, usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    // dataset
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    // tests
    #[error("conditioning submatrix is singular")]
    SingularSubmatrix,
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("correlation magnitude {0} is not below 1")]
    DegenerateCorrelation(f64),
    #[error("degenerate sample: all pairwise distances are zero")]
    DegenerateSample,
    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),

    // skeleton
    #[error("eigendecomposition failed")]
    EigenFailure,
    #[error("scaling {0} out of range")]
    BetaOutOfRange(f64),
    #[error("covariance matrix is not positive semidefinite")]
    NotPsd,

    // score / anm
    #[error("regression design for node {0} is rank deficient")]
    RankDeficient(usize),
    #[error("residual variance of node {0} is zero")]
    ZeroResidualVariance(usize),
    #[error("linear solve failed")]
    SolveFailure,

    // pipeline
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::SpecInvalid(_) => ErrorKind::Usage,
            Error::Io(_)
            | Error::Parse { .. }
            | Error::DuplicateName(_)
            | Error::TooFewRows(_)
            | Error::ConstantColumn(_)
            | Error::InvalidDataset(_)
            | Error::InvalidGraph(_)
            | Error::NodeCountMismatch(..)
            | Error::LengthMismatch(..)
            | Error::TooFewSamples(_)
            | Error::DegenerateSample
            | Error::OutOfRange(_) => ErrorKind::Data,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Numerical,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
