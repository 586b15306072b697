use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("expression evaluated to a non-finite value at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("point {point:?} lies outside the model domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("frame is singular at {point:?}")]
    SingularFrame { point: Vec<f64> },

    #[error("finite-difference stencil leaves the domain at {point:?} (direction {direction})")]
    StencilOutsideDomain { point: Vec<f64>, direction: usize },

    #[error("invalid almost contact metric structure: {0}")]
    InvalidStructure(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("structural failure: {0}")]
    Structural(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
