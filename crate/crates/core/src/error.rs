use alloc::string::String;
use core::fmt;

/// Errors reported by the simulator and the analysis layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition (bad dimension,
    /// non-positive threshold, unknown tag, ...).
    InvalidArgument(String),
    /// The state became non-finite or a decomposition failed.
    NumericFailure { time: f64, reason: String },
    /// The switched backend recorded more switches than allowed.
    DivergenceSuspected { switches: usize, time: f64 },
    /// A restricted Gram matrix is rank deficient.
    SingularSystem { condition: f64 },
    /// A brute-force enumeration exceeds its cap.
    TooLarge { supports: u128, cap: u128 },
    /// A theorem or lemma precondition does not hold for the given input.
    PreconditionViolated(String),
    /// Not enough usable samples for a fit.
    InsufficientData(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NumericFailure { time, reason } => {
                write!(f, "numeric failure at t = {time}: {reason}")
            }
            Error::DivergenceSuspected { switches, time } => write!(
                f,
                "divergence suspected: {switches} switches recorded by t = {time}"
            ),
            Error::SingularSystem { condition } => write!(
                f,
                "singular system: eigenvalue ratio {condition:e} below tolerance"
            ),
            Error::TooLarge { supports, cap } => write!(
                f,
                "{supports} supports exceed the enumeration cap of {cap}; use the RIP estimate or a sampled lower bound"
            ),
            Error::PreconditionViolated(msg) => write!(f, "precondition violated: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
