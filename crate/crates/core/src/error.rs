use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("unknown preset `{name}` (valid presets: {valid})")]
    UnknownPreset { name: String, valid: String },

    #[error("rabi frequency is defined for non-negative separations only, got {0}")]
    NegativeSeparation(f64),

    #[error("mixing angle is undefined when both couplings vanish")]
    UndefinedMixingAngle,

    #[error("eigenstate centred at {center} needs a margin of {margin} to the grid edges [{x_min}, {x_max}]")]
    CenterTooCloseToBoundary {
        center: f64,
        margin: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("imaginary-time relaxation did not converge in {steps} steps (last energy change {last_change:e})")]
    RelaxationDiverged { steps: usize, last_change: f64 },

    #[error("wavefunction leaked to the grid boundary at t = {time}: edge probability {edge_probability:e} exceeds {limit:e}")]
    ContainmentViolation {
        time: f64,
        edge_probability: f64,
        limit: f64,
    },

    #[error("sweep value {value} of `{parameter}` gives an invalid protocol: {reason}")]
    InvalidSweepValue {
        parameter: String,
        value: f64,
        reason: String,
    },

    #[error("convergence check failed: finest delta {delta:e} exceeds {limit:e}")]
    NotConverged { delta: f64, limit: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed protocol file: {0}")]
    Format(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
