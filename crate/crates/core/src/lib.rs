//! Solver library for perturbed Lane-Emden equations on the unit interval.
//!
//! Both endpoints of the interval are fixed singularities of the equation.
//! The library constructs power-series local solutions at each endpoint,
//! continues them numerically into the interior, and matches the two
//! branches in the phase plane at an interior abscissa. Each intersection
//! of the two phase curves is a global analytic solution.

pub mod asymptotics;
pub mod continuation;
pub mod equation;
pub mod error;
pub mod expansion;
pub mod matching;
pub mod series;

pub use error::{Error, Result};
pub use series::{PhasePoint, PowerSeries};
