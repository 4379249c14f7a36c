use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("insufficient observations: {0}")]
    InsufficientObservations(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("all differences truncated in window at block {block}")]
    AllTruncated { block: usize },

    #[error("degenerate volatility estimate at block {block}")]
    DegenerateVolatility { block: usize },

    #[error("all blocks empty")]
    AllBlocksEmpty,

    #[error("out-of-order observation: time {time} after {last}")]
    OutOfOrder { time: f64, last: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
