use thiserror::Error;

/// Errors raised by the guidance, control, simulation and tuning layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The LOS is (nearly) vertical, so the PN frame's horizontal axis is undefined.
    #[error("degenerate PN frame: LOS within {0:e} of vertical")]
    DegenerateFrame(f64),

    #[error("engagement terminated: range {0} m")]
    EngagementTerminated(f64),

    /// The demanded normal acceleration cannot be produced under the thrust and FOV bounds.
    #[error("infeasible control demand: {0}")]
    Infeasible(String),

    #[error("simulation diverged: non-finite state")]
    Diverged,

    #[error("kernel matrix not positive definite after jitter {0:e}")]
    NotPositiveDefinite(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
