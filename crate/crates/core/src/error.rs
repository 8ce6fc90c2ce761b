//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series centers differ ({0} vs {1})")]
    CenterMismatch(f64, f64),

    #[error("leading coefficient is zero; the fast power recurrence divides by it")]
    ZeroLeadingCoefficient,

    #[error("non-finite coefficient at index {0}")]
    NonFiniteCoefficient(usize),

    #[error("a series needs at least one coefficient")]
    EmptyCoefficients,

    #[error("invalid equation: {0}")]
    InvalidEquation(String),

    #[error("singular amplitude undefined: {0}")]
    AmplitudeUndefined(String),

    #[error("x=1 expansion degenerates: leading coefficient A vanishes")]
    DegenerateExpansion,

    #[error("resonant parameter k = {k}: the x=1 recurrence denominator vanishes at order {order}")]
    ResonantParameter { k: f64, order: usize },

    #[error("resonant finite-form solutions are not implemented (detection only)")]
    ResonantNotImplemented,

    #[error("recurrence breakdown at order {order}: denominator {denominator}")]
    RecurrenceBreakdown { order: usize, denominator: f64 },

    #[error("offset {offset} lies outside the trusted series range {limit}")]
    OutsideTrustRadius { offset: f64, limit: f64 },

    #[error("no real constant solution: gamma/delta negative with an even root degree")]
    NoConstantSolution,

    #[error("r(x) is not constant; the Lyapunov function is undefined")]
    NonconstantR,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed: {0}")]
    IntegrationFailed(String),

    #[error("matched solution degraded: mismatch {mismatch} exceeds tolerance {tolerance}")]
    MatchDegraded { mismatch: f64, tolerance: f64 },

    #[error("not enough oscillations in the fit window: {0}")]
    InsufficientOscillations(String),
}
