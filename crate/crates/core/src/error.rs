use alloc::string::String;

/// Errors produced by dataset construction, training, unlearning, and
/// verification. The CLI maps these onto distinct exit codes.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or precondition violation.
    #[error("config error: {0}")]
    Config(String),
    /// A corpus or paraphrase source cannot supply the requested composition.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Non-finite values encountered during numeric work.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl core::fmt::Display) -> Self {
        Error::Config(alloc::format!("{msg}"))
    }

    pub fn capacity(msg: impl core::fmt::Display) -> Self {
        Error::Capacity(alloc::format!("{msg}"))
    }

    pub fn numeric(msg: impl core::fmt::Display) -> Self {
        Error::Numeric(alloc::format!("{msg}"))
    }
}
