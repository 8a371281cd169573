use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite evaluation of {what} at u = {u}")]
    NonFinite { what: &'static str, u: f64 },

    #[error("derivative order {0} is not supported (expected 0, 1 or 2)")]
    InvalidOrder(u8),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("step size underflow at r = {r} (h = {h:e})")]
    StepSizeUnderflow { r: f64, h: f64 },

    #[error("non-finite state at r = {r}")]
    NonFiniteState { r: f64 },

    #[error("no value of alpha in [{lo}, {hi}] produced a solution")]
    EmptyCurve { lo: f64, hi: f64 },

    #[error("turning point refinement left its bracket [{lo}, {hi}]")]
    BracketLost { lo: f64, hi: f64 },

    #[error("both ends of the epsilon bracket classify as {0}")]
    SameClassAtEnds(String),

    #[error("profile is not near a critical point: w(1) = {w_at_1:e} relative to w(0)")]
    NotNearCritical { w_at_1: f64 },

    #[error("precondition fails: {0}")]
    PreconditionFails(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("level {level} is never reached by the profile")]
    LevelNotReached { level: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Usage and configuration problems, as opposed to mathematical failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Config(_) | Error::InvalidOrder(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
