use nalgebra::Point2;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unsupported polynomial degree {0} (only 1 and 2 are available)")]
    UnsupportedDegree(usize),

    #[error("non-finite value {value} at ({x}, {y})", x = point.x, y = point.y)]
    NonFinite { point: Point2<f64>, value: f64 },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error(
        "coefficient not elliptic at ({x}, {y}): smallest eigenvalue {min_eigenvalue}",
        x = point.x, y = point.y
    )]
    Ellipticity {
        point: Point2<f64>,
        min_eigenvalue: f64,
    },

    #[error("negative source {value} at ({x}, {y}) has no square root", x = point.x, y = point.y)]
    NegativeSource { point: Point2<f64>, value: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    /// A failure inside a Newton iteration. `last` holds the most recent
    /// iterate so callers can still report on it.
    #[error("Newton iteration {iteration} failed: {source}")]
    NewtonBreakdown {
        iteration: usize,
        #[source]
        source: Box<Error>,
        last: Box<crate::nonlinear::NonlinearSolution>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}
