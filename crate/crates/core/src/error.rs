use std::path::PathBuf;

use nalgebra::Vector3;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse layout: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid layout: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("point ({:.6e}, {:.6e}, {:.6e}) m is {distance:.3e} m from wire {prism}; field is singular there", point.x, point.y, point.z)]
    Singular {
        prism: usize,
        point: Vector3<f64>,
        distance: f64,
    },

    #[error("minimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("minimizer escaped the search box at ({:.6e}, {:.6e}, {:.6e}) m; trap lost", .0.x, .0.y, .0.z)]
    Escaped(Vector3<f64>),

    #[error("stationary point is not a minimum (Hessian eigenvalues {0:?})")]
    SaddlePoint([f64; 3]),

    #[error("|B| = {0:.3e} T at the trap centre; spin-flip region")]
    ZeroField(f64),

    #[error("Hessian is singular (smallest eigenvalue {0:.3e} J/m^2)")]
    SingularHessian(f64),

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate summary: initial {0} is zero")]
    Degenerate(&'static str),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: &'static str, message: String },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
