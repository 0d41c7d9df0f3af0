use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record {index} in {path}: {reason}")]
    Parse {
        path: PathBuf,
        /// 1-based line or record number.
        index: usize,
        reason: String,
    },

    #[error("non-finite value at record {index}")]
    NonFinite { index: usize },

    #[error("empty point cloud: {0}")]
    EmptyCloud(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("grid needs {required} bytes, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("point {index} at ({x}, {y}, {z}) lies outside the grid")]
    OutsideGrid { index: usize, x: f64, y: f64, z: f64 },

    #[error("occupancy grid has no occupied cell")]
    EmptyOccupancy,

    #[error("non-finite activation in layer {layer}")]
    NonFiniteLayer { layer: usize },

    #[error("non-finite {0}")]
    NonFiniteValue(&'static str),

    #[error("solver diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
