use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("{n} qubits exceeds the cap of {cap}")]
    Size { n: usize, cap: usize },
    #[error("sector Sz={sz} is empty for {n} sites")]
    EmptySector { sz: f64, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid gate: {0}")]
    Gate(String),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
