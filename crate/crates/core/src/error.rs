use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("numeric error: {what} ({diagnostics})")]
    Numeric { what: String, diagnostics: String },

    #[error("integrator step failed on trajectory {trajectory} at t = {t}: {reason}")]
    Step { trajectory: u64, t: f64, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(what: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Numeric {
            what: what.into(),
            diagnostics: diagnostics.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
