use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid covariance model: {0}")]
    InvalidModel(String),

    #[error("singular Gram matrix: pivot {pivot:e} below {threshold:e} at position {position}")]
    SingularGram {
        position: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("singular design matrix (rank deficient at column {column})")]
    SingularDesign { column: usize },

    #[error("candidate set of size {size} exceeds the branch-and-bound limit {limit}")]
    CandidateSetTooLarge { size: usize, limit: usize },

    #[error("exhaustive search over {count} subsets exceeds the limit {limit}")]
    ProblemTooLarge { count: u128, limit: u128 },

    #[error("degenerate response: variance {variance:e} is numerically zero")]
    DegenerateResponse { variance: f64 },

    #[error("degenerate fit: fitted values have zero variance")]
    DegenerateFit,

    #[error("empty selection: the selected set must be nonempty")]
    EmptySelection,

    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("quadrature failed: estimated error {estimate:e} above {target:e}")]
    QuadratureFailure { estimate: f64, target: f64 },

    #[error("invalid p = {0}: the centering a_p needs p >= 3")]
    InvalidP(usize),

    #[error("parse error at row {row}, column {column}: {token:?}")]
    Parse {
        row: usize,
        column: usize,
        token: String,
    },

    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag used in JSON error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidData(_) => "InvalidData",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::InvalidModel(_) => "InvalidModel",
            Error::SingularGram { .. } => "SingularGram",
            Error::SingularDesign { .. } => "SingularDesign",
            Error::CandidateSetTooLarge { .. } => "CandidateSetTooLarge",
            Error::ProblemTooLarge { .. } => "ProblemTooLarge",
            Error::DegenerateResponse { .. } => "DegenerateResponse",
            Error::DegenerateFit => "DegenerateFit",
            Error::EmptySelection => "EmptySelection",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::InvalidP(_) => "InvalidP",
            Error::Parse { .. } => "ParseError",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
