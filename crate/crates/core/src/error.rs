use thiserror::Error;

/// Errors produced by spline construction, model loading, assembly and solves.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid spline space: {0}")]
    InvalidSpace(String),

    #[error("degree {0} not supported (must be between 1 and {max})", max = crate::spline::MAX_DEGREE)]
    UnsupportedDegree(usize),

    #[error("parameter {value} outside knot range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("derivative order {order} exceeds degree {degree}")]
    DerivativeOrder { order: usize, degree: usize },

    #[error("mesh too coarse for vertex modification: {0} distinct interior knots, need at least 4")]
    TooCoarseForCoarsening(usize),

    #[error("space too small for end modification: dimension {0}, need at least 8")]
    SpaceTooSmall(usize),

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error in model file at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {residual:.3e})")]
    CgDiverged {
        iters: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("eigenvalue solve failed: {0}")]
    Eigen(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
