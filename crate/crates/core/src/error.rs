use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// The evaluation error bound is no longer small relative to the value.
    #[error("precision exhausted at order {order}, z = {z}: bound {bound:e} vs |value| {value:e}")]
    PrecisionExhausted {
        order: usize,
        z: f64,
        value: f64,
        bound: f64,
    },

    #[error("exact mask enumeration refused for d = {d} (limit {limit})")]
    EnumerationTooLarge { d: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} is not supported for this model")]
    Unsupported(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}
