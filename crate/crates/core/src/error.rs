use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate ({u}, {v}) outside the unit square")]
    OutsideUnitSquare { u: f64, v: f64 },

    #[error("partition order must be at least 2, got {0}")]
    InvalidOrder(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index ({j}, {k}) outside the free lattice of order {m}")]
    IndexOutOfRange { j: usize, k: usize, m: usize },

    #[error("tied values in {column} at positions {first} and {second}")]
    Ties {
        column: &'static str,
        first: usize,
        second: usize,
    },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("chain is empty")]
    EmptyChain,

    #[error("infeasible sampler state at sweep {sweep}: {detail}")]
    InfeasibleState { sweep: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed chain file: {0}")]
    ChainFormat(String),
}
