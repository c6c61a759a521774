use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("nesting violated between levels {lower} and {upper} at t = {t}")]
    Nesting { lower: f64, upper: f64, t: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FlowError {
    pub fn input(msg: impl Into<String>) -> Self {
        FlowError::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        FlowError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
