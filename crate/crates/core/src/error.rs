use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented invariant.
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    /// A quantity fell outside the domain of an inversion (implied vol, strike from delta).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The hedge vanilla has (numerically) no sensitivity to variance.
    #[error("hedge degeneracy: vanilla variance sensitivity {theta_c:e} below threshold")]
    HedgeDegenerate { theta_c: f64 },

    /// A pricer was asked for a product it cannot value.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed or incompatible wire frame.
    #[error("protocol error at byte {offset}: {message}")]
    Protocol { offset: usize, message: String },

    /// Worker transport failure.
    #[error("transport error: {0}")]
    Transport(String),

    /// A failure while hedging one path, with where it happened.
    #[error("path {path} at t={time:.6}: {source}")]
    Path {
        path: u64,
        time: f64,
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
