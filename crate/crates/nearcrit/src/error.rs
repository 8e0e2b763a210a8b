use thiserror::Error;

/// Failure modes shared by every module of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The lattice or experiment configuration is not admissible.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with arguments outside its contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// Measured calibration could not produce an estimate.
    #[error("calibration error: {0}")]
    Calibration(String),
    /// Two inputs that must describe the same instance disagree.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A search ran out of reachable vertices before meeting its target.
    #[error("unreachable: {0}")]
    Unreachable(String),
    /// A regression could not be carried out.
    #[error("fit error: {0}")]
    Fit(String),
    /// The threshold maps to an infinite near-critical parameter.
    #[error("infinite parameter: p = {0} has no finite lambda")]
    Infinite(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
