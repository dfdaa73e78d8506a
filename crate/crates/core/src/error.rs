use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid beam spec: {0}")]
    BeamSpec(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("point ({0}, {1}, {2}) lies outside the mesh")]
    PointOutsideMesh(f64, f64, f64),

    #[error("invalid material: {0}")]
    Material(String),

    #[error("inverted deformation gradient: det(F) = {0:e}")]
    InvertedDeformation(f64),

    #[error("inverted element: tet {tet} has det(F) = {det:e}")]
    InvertedElement { tet: usize, det: f64 },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("newton did not converge after {iters} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NonConvergence {
        iters: usize,
        residual: f64,
        tolerance: f64,
        history: Vec<f64>,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("observation {index}: {source}")]
    AtObservation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_observation(self, index: usize) -> Self {
        Error::AtObservation {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
