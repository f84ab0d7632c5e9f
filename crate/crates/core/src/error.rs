//! Error type shared by every layer of the simulator.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite or otherwise invalid value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A fixed-point iteration did not settle within its round budget.
    #[error(
        "no convergence after {rounds} rounds (last two iterates {previous:.12e}, {last:.12e})"
    )]
    Convergence {
        rounds: usize,
        previous: f64,
        last: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed pulse file: {0}")]
    PulseFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
