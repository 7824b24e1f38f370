use thiserror::Error;

/// Errors raised by the simulator, the oracle and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A query outside the domain of a function, e.g. an LSR energy density
    /// evaluated at or below the support threshold.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "trial setup failed: no in-support initial state after {attempts} draws \
         (b = {b}, phi_c = {phi_c}, last phi_init = {phi_init})"
    )]
    TrialSetup {
        b: f64,
        phi_c: f64,
        phi_init: f64,
        attempts: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
