use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{column}`")]
    MissingColumn { column: String },
    #[error("row {row}, column `{column}`: value `{value}` out of domain ({expected})")]
    ValueOutOfDomain {
        row: usize,
        column: String,
        value: String,
        expected: String,
    },
    #[error("duplicate case id `{0}`")]
    DuplicateCaseId(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("unknown level `{level}` for factor `{factor}`")]
    UnknownLevel { factor: String, level: String },
    #[error("arm z={0} is empty")]
    EmptyArm(u8),
    #[error("bounds crossed for {target}: lower {lower} > upper {upper}")]
    BoundsCrossed {
        target: String,
        lower: f64,
        upper: f64,
    },
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("outcome `{0}` has no variation")]
    NoVariation(String),
    #[error("separation detected (coefficient norm {norm:.3e})")]
    Separation { norm: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("decision category {0} is never observed")]
    EmptyCategory(usize),
    #[error("Newton iterations did not converge after {iterations} steps (gradient norm {grad_norm:.3e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("stratum {stratum} has negligible weight in arm z={z}")]
    DegenerateStratum { stratum: usize, z: u8 },
    #[error("{failed} of {total} bootstrap replicates failed; last error: {last}")]
    ReplicateFailureRate {
        failed: usize,
        total: usize,
        last: String,
    },
    #[error("empty truncation interval ({lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("decision category {d} is absent in arm z={z}")]
    EmptyDecisionCell { z: u8, d: usize },
    #[error("non-finite sampler state at iteration {iteration} (chain {chain})")]
    NonFiniteState { chain: usize, iteration: usize },
    #[error("at least {needed} chains are required, got {got}")]
    TooFewChains { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("stratum {stratum} has non-positive mass {mass} under the supplied sensitivity table")]
    NegativeStratumMass { stratum: usize, mass: f64 },
    #[error("attribute group problem: {0}")]
    EmptyGroup(String),
    #[error("subset selects no cases")]
    EmptySubset,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("hearing order missing for case `{0}`")]
    MissingHearingOrder(String),
    #[error("degenerate test regression after {attempts} attempts")]
    DegenerateRegression { attempts: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BoundsCrossed { .. }
                | Error::DivisionByZero(_)
                | Error::Separation { .. }
                | Error::RankDeficient
                | Error::NotConverged { .. }
                | Error::DegenerateStratum { .. }
                | Error::ReplicateFailureRate { .. }
                | Error::EmptyInterval { .. }
                | Error::NonFiniteState { .. }
                | Error::NegativeStratumMass { .. }
                | Error::DegenerateRegression { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "MissingColumn",
            Error::ValueOutOfDomain { .. } => "ValueOutOfDomain",
            Error::DuplicateCaseId(_) => "DuplicateCaseId",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::UnknownLevel { .. } => "UnknownLevel",
            Error::EmptyArm(_) => "EmptyArm",
            Error::BoundsCrossed { .. } => "BoundsCrossed",
            Error::DivisionByZero(_) => "DivisionByZero",
            Error::NoVariation(_) => "NoVariation",
            Error::Separation { .. } => "Separation",
            Error::RankDeficient => "RankDeficient",
            Error::EmptyCategory(_) => "EmptyCategory",
            Error::NotConverged { .. } => "NotConverged",
            Error::DegenerateStratum { .. } => "DegenerateStratum",
            Error::ReplicateFailureRate { .. } => "ReplicateFailureRate",
            Error::EmptyInterval { .. } => "EmptyInterval",
            Error::EmptyDecisionCell { .. } => "EmptyDecisionCell",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::TooFewChains { .. } => "TooFewChains",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NegativeStratumMass { .. } => "NegativeStratumMass",
            Error::EmptyGroup(_) => "EmptyGroup",
            Error::EmptySubset => "EmptySubset",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::MissingHearingOrder(_) => "MissingHearingOrder",
            Error::DegenerateRegression { .. } => "DegenerateRegression",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
