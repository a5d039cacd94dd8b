use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

impl Error {
    /// Prefix the message with `ctx`, keeping the kind.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Range(m) => Error::Range(format!("{ctx}: {m}")),
            Error::Infeasible(m) => Error::Infeasible(format!("{ctx}: {m}")),
            Error::Budget(m) => Error::Budget(format!("{ctx}: {m}")),
            Error::Schema { path, message } => Error::Schema { path, message: format!("{ctx}: {message}") },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}
