//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure while evaluating a vector field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("expression evaluation failed: {0}")]
    Eval(String),
    #[error("delay history does not cover t = {t} (covered [{from}, {to}])")]
    HistoryGap { t: f64, from: f64, to: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("grazing impact: relative approach speed {relative_velocity:e} below threshold")]
    GrazingImpact { relative_velocity: f64 },
    #[error("invalid approach: relative velocity {relative_velocity} is not directed into the surface")]
    InvalidApproach { relative_velocity: f64 },

    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepSizeUnderflow { t: f64, dt: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("no sign change of the event function on [{t_start}, {t_end}]")]
    NoSignChange { t_start: f64, t_end: f64 },
    #[error("t = {t} outside segment [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("initial state penetrates the guard (guard value {value})")]
    InitialPenetration { value: f64 },
    #[error("trajectory penetrates the guard at t = {t} (guard value {value:e})")]
    PenetrationDetected { t: f64, value: f64 },
    #[error("simulation stalled at t = {t}: repeated zero-length flights")]
    Stalled { t: f64 },

    #[error("at least 3 impacts are required, found {found}")]
    TooFewImpacts { found: usize },
    #[error("trajectories share no common time window")]
    DisjointWindows,

    #[error("non-finite field sample at (u = {u}, v = {v})")]
    NonFiniteSample { u: f64, v: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown parameter `{parameter}` for model `{model}`")]
    UnknownParameter { model: String, parameter: String },

    #[error(transparent)]
    Syntax(#[from] crate::expr::SyntaxError),
    #[error("schema error at `{key}`: {reason}")]
    Schema { key: String, reason: String },

    #[error(transparent)]
    Field(#[from] FieldError),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by the request rather than by the computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::UnknownModel(_)
                | Error::UnknownParameter { .. }
                | Error::Syntax(_)
                | Error::InvalidParameter { .. }
        )
    }

    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }

    pub(crate) fn schema(key: &str, reason: impl Into<String>) -> Self {
        Error::Schema { key: key.to_string(), reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
