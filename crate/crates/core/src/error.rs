use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value, unknown identifier or mismatched shapes.
    #[error("configuration error: {0}")]
    Config(String),
    /// A value outside the domain an operation accepts (e.g. a non-finite action).
    #[error("domain error: {0}")]
    Domain(String),
    /// Operation invoked in the wrong state (terminated episode, empty buffer, missing cache).
    #[error("state error: {0}")]
    State(String),
    /// Malformed inputs to a learning component.
    #[error("input error: {0}")]
    Input(String),
    #[error("optimizer error: {0}")]
    Optimizer(String),
    /// A mathematical precondition does not hold (e.g. KL undefined without full support).
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
}
