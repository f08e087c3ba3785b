use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Several independent validation failures, reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("eigensolver failed for {points} quadrature points: {detail}")]
    Eigen { points: usize, detail: String },

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("truncation fraction {requested} unattainable; retained modes reach at most {attainable}")]
    Truncation { requested: f64, attainable: f64 },

    #[error("return mapping did not converge after {iterations} iterations (residual {residual:e})")]
    ReturnMap { iterations: usize, residual: f64 },

    #[error("load step {step} (load {load} N) did not converge after {iterations} iterations: |r| = {residual:e} > {target:e}")]
    LoadStep {
        step: usize,
        load: f64,
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("sample budget exhausted after {samples} samples (achieved estimator variance {variance:e})")]
    Budget { samples: usize, variance: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
