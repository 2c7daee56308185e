use std::io;

use thiserror::Error;

/// Errors produced anywhere in the simulation and reconstruction chain.
#[derive(Debug, Error)]
pub enum QuoptError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape out of bounds: {0}")]
    ShapeOutOfBounds(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("degenerate series: max + min = 0")]
    DegenerateSeries,

    #[error("fringe bin {bin} out of range for a {len}-step scan (must be 1 <= n < {half})", half = len / 2)]
    BinOutOfRange { bin: usize, len: usize },

    #[error("fringe bin mismatch: config implies {from_config}, spectrum peak at {from_data}")]
    BinMismatch { from_config: usize, from_data: usize },

    #[error("no fringe detected in stack spectrum")]
    NoFringeDetected,

    #[error("missing visibility reference for log opacity")]
    MissingReference,

    #[error("insufficient angular range: {span_deg:.1} deg covered, need at least {needed_deg:.1}")]
    InsufficientAngularRange { span_deg: f64, needed_deg: f64 },

    #[error("center of rotation undetermined: {0}")]
    CorUndetermined(String),

    #[error("too few angles: {0} (need at least 2)")]
    TooFewAngles(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl QuoptError {
    /// Process exit code for the command-line front end.
    ///
    /// 3 is a data or format problem, 4 a numeric failure. Usage errors (2)
    /// are produced by argument parsing before any of these can occur.
    pub fn exit_code(&self) -> i32 {
        match self {
            QuoptError::DegenerateSeries
            | QuoptError::NoFringeDetected
            | QuoptError::CorUndetermined(_)
            | QuoptError::Numeric(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, QuoptError>;
