use thiserror::Error;

/// Which normalization coefficient vanished during joint bidiagonalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    /// α: norm of the projected vector v′.
    Alpha,
    /// β: norm of the new left vector for A.
    Beta,
    /// α̂: norm of the new left vector for L.
    AlphaHat,
}

impl std::fmt::Display for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coefficient::Alpha => write!(f, "alpha"),
            Coefficient::Beta => write!(f, "beta"),
            Coefficient::AlphaHat => write!(f, "alpha_hat"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported matrix market format: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("breakdown at step {index}: {coefficient} = {value:e} below threshold {threshold:e}")]
    Breakdown {
        index: usize,
        coefficient: Coefficient,
        value: f64,
        threshold: f64,
    },

    #[error("joint bidiagonal identity defect {defect:e} exceeds {tolerance:e}")]
    IdentityDefect { defect: f64, tolerance: f64 },

    #[error("bidiagonal matrix is reduced at index {index}; deflate before applying a shifted step")]
    Reduced { index: usize },

    #[error("coupled sweep left entry ({row}, {col}) = {value:e} above zeroing threshold {threshold:e}")]
    CouplingDefect {
        row: usize,
        col: usize,
        value: f64,
        threshold: f64,
    },

    #[error("stacked matrix is numerically rank deficient")]
    RankDeficient,
}

pub type Result<T> = std::result::Result<T, Error>;
