use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("statistic {t_obs} does not exceed the critical value {c}")]
    NotSignificant { t_obs: f64, c: f64 },

    #[error("record {snp_id}: statistic {t_obs} does not exceed the critical value {c}")]
    RecordNotSignificant { snp_id: String, t_obs: f64, c: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("chain has {have} retained draws, {need} required")]
    InsufficientDraws { have: usize, need: usize },

    #[error("replicate {replicate} (seed {seed}) failed: {source}")]
    Replicate {
        replicate: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
