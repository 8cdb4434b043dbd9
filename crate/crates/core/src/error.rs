use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semi-definite (pivot {pivot:e} at index {index})")]
    NotPositiveSemiDefinite { index: usize, pivot: f64 },

    #[error("design is rank deficient: {0}")]
    RankDeficient(String),

    #[error("dimension error: {0}")]
    DimensionError(String),

    #[error("degrees of freedom must be >= 1, got {0}")]
    InvalidDf(f64),

    #[error("coordinate descent did not converge within {sweeps} sweeps at lambda = {lambda:e}")]
    ConvergenceFailure { lambda: f64, sweeps: usize },

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("Gram matrix diagonal entry {index} is {value}, expected 1")]
    NotUnitDiagonal { index: usize, value: f64 },

    #[error("{path}: row {row}: {message}")]
    ParseError {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: treatment must be 0 or 1, got `{value}`")]
    InvalidTreatmentValue { row: usize, value: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` is {actual}, expected {expected}")]
    WrongColumnType {
        column: String,
        expected: &'static str,
        actual: &'static str,
    },

    #[error("level `{level}` of `{column}` has {count} unit(s); at least 2 are required")]
    DegenerateLevel {
        column: String,
        level: String,
        count: usize,
    },

    #[error(
        "{0} categorical columns requested; at most one categorical variable can enter a \
         factor design because one-hot blocks of two categoricals are linearly dependent \
         (the design would be rank deficient)"
    )]
    MultipleCategoricals(usize),

    #[error("transformed design requires assignment probability 0.5, got {0}")]
    UnsupportedProbability(f64),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    ConfigError(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Validation errors are caller mistakes (bad arguments or config); everything
    /// else comes from the data or the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigError(_)
                | Error::InvalidDf(_)
                | Error::MultipleCategoricals(_)
                | Error::UnsupportedProbability(_)
        )
    }
}
