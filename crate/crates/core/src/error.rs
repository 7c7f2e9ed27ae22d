use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("non-positive Jacobian determinant {det:.3e}")]
    Singular { det: f64 },

    #[error("inadmissible state: det F = {det:.3e} at quadrature point {point} (X = [{x:.4}, {y:.4}])")]
    Inadmissible {
        point: usize,
        x: f64,
        y: f64,
        det: f64,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solution is not converged")]
    Unconverged,

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("model is ring-parameterized and needs a ratio P")]
    MissingRatio,

    #[error("unsupported network depth {0} (at most 2 hidden layers)")]
    UnsupportedDepth(usize),

    #[error("scale factor must be positive, got {0}")]
    InvalidScale(f64),

    #[error("no loss weight for group (R = {r}, P = {p})")]
    MissingWeight { r: f64, p: f64 },

    #[error("empty group (R = {r}, P = {p})")]
    EmptyGroup { r: f64, p: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("load path abandoned: first state failed ({0})")]
    PathAbandoned(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("model schema: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::Inadmissible { .. }
                | Error::NoConvergence { .. }
                | Error::Unconverged
                | Error::LinearSolve(_)
                | Error::PathAbandoned(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
