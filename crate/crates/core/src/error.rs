use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing required field `{0}`")]
    MissingRequiredField(&'static str),
    #[error("defendant list is empty")]
    EmptyDefendantList,

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("insufficient pool: need {needed} rows of {side}, only {available} available")]
    InsufficientPool {
        side: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("invalid generator settings: {0}")]
    InvalidSpec(String),

    #[error("matrix is not column-centered (column {column} has mean {mean:e})")]
    NotCentered { column: usize, mean: f64 },
    #[error("eigen solver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("all columns are constant; total variance is zero")]
    ZeroVariance,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component count {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("gini impurity of an empty node")]
    EmptyNode,
    #[error("training data contains a single class")]
    SingleClassInput,
    #[error("no row was out of bag for any tree")]
    NoOobRows,
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("scores need both classes present")]
    SingleClass,
    #[error("no unlawful rows; precision-recall is undefined")]
    NoPositiveClass,
    #[error("bad fold count k={k} for n={n}")]
    BadK { k: usize, n: usize },
    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),
    #[error("every search draw failed")]
    NoValidDraw,

    #[error("bad correlation matrix: {0}")]
    BadCorrelationMatrix(String),

    #[error("config error: {0}")]
    Config(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable, machine-parseable name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::MalformedXml(_) => "MalformedXml",
            Error::MissingRequiredField(_) => "MissingRequiredField",
            Error::EmptyDefendantList => "EmptyDefendantList",
            Error::NonFiniteInput { .. } => "NonFiniteInput",
            Error::UnknownCategory(_) => "UnknownCategory",
            Error::InsufficientPool { .. } => "InsufficientPool",
            Error::DegenerateSplit(_) => "DegenerateSplit",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::NotCentered { .. } => "NotCentered",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::ZeroVariance => "ZeroVariance",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::KOutOfRange { .. } => "KOutOfRange",
            Error::EmptyNode => "EmptyNode",
            Error::SingleClassInput => "SingleClassInput",
            Error::NoOobRows => "NoOobRows",
            Error::InvalidParams(_) => "InvalidParams",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyInput => "EmptyInput",
            Error::SingleClass => "SingleClass",
            Error::NoPositiveClass => "NoPositiveClass",
            Error::BadK { .. } => "BadK",
            Error::InvalidSearchSpace(_) => "InvalidSearchSpace",
            Error::NoValidDraw => "NoValidDraw",
            Error::BadCorrelationMatrix(_) => "BadCorrelationMatrix",
            Error::Config(_) => "ConfigError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
            Error::Io(_) => "IoError",
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config(_)
            | Error::InvalidParams(_)
            | Error::InvalidSearchSpace(_)
            | Error::InvalidSpec(_)
            | Error::BadK { .. }
            | Error::KOutOfRange { .. }
            | Error::EmptyDefendantList => Category::Config,
            Error::NotCentered { .. }
            | Error::NoConvergence { .. }
            | Error::ZeroVariance
            | Error::BadCorrelationMatrix(_) => Category::Numeric,
            _ => Category::Data,
        }
    }
}
