use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {0}")]
    InvalidGrid(String),

    #[error("point ({x}, {y}) lies outside the unit pitch; clamp at ingestion")]
    OutOfPitch { x: f64, y: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("infeasible model: ||T||_inf = {t_inf} >= 1 at states {states:?}")]
    Infeasible { t_inf: f64, states: Vec<usize> },

    #[error("singular linear system at pivot {0}")]
    Singular(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("no grid reaches the target; q90 errors: {0}")]
    NoGrid(String),

    #[error("no acceptable error level: {0}")]
    NoAcceptableLevel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
