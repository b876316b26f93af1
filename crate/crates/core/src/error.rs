use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record length {found} does not match schema width {expected}")]
    SchemaMismatch { expected: usize, found: usize },

    #[error("line {line}, column {column}: malformed cell {value:?} (expected 0 or 1)")]
    MalformedCell {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("dataset file has an empty or missing header")]
    EmptyHeader,

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot compose budgets from different families ({0} and {1})")]
    MixedBudgetFamilies(&'static str, &'static str),

    #[error("conversion requires a uniform per-attribute metric")]
    NonUniformMetric,

    #[error("record {0} is not a vertex of the record graph")]
    RecordNotInGraph(String),

    #[error("domain of 2^{d} records exceeds the brute-force limit 2^{limit}")]
    DomainTooLarge { d: usize, limit: usize },

    #[error("{count} disjoint tuples exceed the enumeration cap {cap}")]
    TupleExplosion { count: u64, cap: u64 },

    #[error("net of {size} weight vectors exceeds the enumeration cap {cap}")]
    NetExplosion { size: u64, cap: u64 },

    #[error("datasets are not neighboring: {0}")]
    NotNeighboring(String),

    #[error("numeric solver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
