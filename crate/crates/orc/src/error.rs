//! Crate-wide error type. The variant names the contract that was violated.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    Shape(String),
    /// Elementwise operands that cannot be broadcast together.
    Broadcast(String),
    /// Numeric-domain violation (log of a non-positive value, division by
    /// zero, a mix ratio outside [0,1], ...).
    Domain(String),
    /// Invalid network specification.
    Spec(String),
    /// Ladder capacity ordering violation.
    Ladder(String),
    /// Label rows that do not form a distribution.
    Label(String),
    /// Invalid configuration key, value, or combination.
    Config(String),
    /// Invalid group-state transition or optimizer state.
    State(String),
    /// Malformed external file (IDX, checkpoint, CSV).
    Format(String),
    /// Training diverged or produced a non-finite loss.
    Train(String),
    /// Underlying I/O failure.
    Io(io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn broadcast(msg: impl Into<String>) -> Self {
        Error::Broadcast(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }
    pub fn ladder(msg: impl Into<String>) -> Self {
        Error::Ladder(msg.into())
    }
    pub fn label(msg: impl Into<String>) -> Self {
        Error::Label(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn train(msg: impl Into<String>) -> Self {
        Error::Train(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Broadcast(m) => write!(f, "broadcast error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Spec(m) => write!(f, "spec error: {m}"),
            Error::Ladder(m) => write!(f, "ladder error: {m}"),
            Error::Label(m) => write!(f, "label error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Train(m) => write!(f, "train error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
