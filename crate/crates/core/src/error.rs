use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("unknown group {0}")]
    UnknownGroup(usize),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stub imbalance in block ({r},{s}): expected totals {total_r:.1} vs {total_s:.1} (relative gap {gap:.3} > tolerance {tolerance})")]
    StubImbalance {
        r: usize,
        s: usize,
        total_r: f64,
        total_s: f64,
        gap: f64,
        tolerance: f64,
    },

    #[error("combinatorial guard exceeded: {count} subsample pairs (limit {limit})")]
    CombinatorialGuard { count: u128, limit: u128 },

    #[error("degenerate estimate: {0}")]
    Degenerate(&'static str),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownNode(_) | Error::UnknownGroup(_) | Error::Input(_) => "input",
            Error::Config(_) | Error::StubImbalance { .. } => "config",
            Error::CombinatorialGuard { .. } => "guard",
            Error::Degenerate(_) => "degenerate",
            Error::Numerical(_) => "numerical",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
