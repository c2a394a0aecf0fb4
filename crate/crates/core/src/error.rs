use cicoord_conic::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoordError {
    #[error("invalid configuration field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not enough data: {0}")]
    Insufficient(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CoordError {
    pub(crate) fn config(field: &str, msg: impl Into<String>) -> Self {
        CoordError::Config {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoordError>;
