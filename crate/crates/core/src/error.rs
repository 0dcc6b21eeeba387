use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter lies outside its domain.
    #[error("parameter domain error: {0}")]
    ParameterDomain(String),

    /// Malformed or insufficient input data.
    #[error("input error: {0}")]
    Input(String),

    /// Every start of a fit ended with a non-finite likelihood.
    #[error("fit failed: {message}")]
    FitFailure {
        message: String,
        diagnostics: Vec<crate::ecm::Diagnostic>,
    },

    /// No candidate in a model-selection run produced a usable fit.
    #[error("model selection failed: {0}")]
    Selection(String),

    /// A simulation experiment lost too many replications.
    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
