use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("state {value} lies outside [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("non-finite sample {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("discrepancy target unreachable: residual {residual:.3e} at alpha = {alpha:.1e} already exceeds {target:.3e}; noise level too small")]
    NoiseLevelTooSmall { alpha: f64, residual: f64, target: f64 },

    #[error("discrepancy target unreachable: residual {residual:.3e} at alpha = {alpha:.1e} stays below {target:.3e}; data too rough")]
    DataTooRough { alpha: f64, residual: f64, target: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse failure class, used to select process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_)
            | Error::OutOfDomain { .. }
            | Error::NonFinite { .. }
            | Error::Structure(_)
            | Error::InsufficientData(_) => ErrorClass::Validation,
            Error::Numerical(_) | Error::NoiseLevelTooSmall { .. } | Error::DataTooRough { .. } => {
                ErrorClass::Numerical
            }
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
        }
    }
}
