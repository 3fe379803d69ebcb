use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called with inputs outside its contract.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("cannot parse {what} from `{input}`: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },

    #[error("fixed point did not converge at step {step}, state {state} after {iterations} iterations (last change {last_change:e})")]
    FixedPointNotConverged {
        step: usize,
        state: usize,
        iterations: usize,
        last_change: f64,
    },

    #[error("non-finite generator value at step {step}, state {state} (y = {y}, z = {z})")]
    NonFinite {
        step: usize,
        state: usize,
        y: f64,
        z: f64,
    },

    #[error("quadrature did not converge: relative change {relative_change:e} with {points} points")]
    Quadrature { points: usize, relative_change: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
