//! Foundational value types shared by every other module.

pub mod extended;
mod frequency;
mod interval;
mod poly;

pub use frequency::{Coupling, Frequency, Phase, RationalFrequency, Regime};
pub use interval::IntervalUnion;
pub use poly::{divisible_by_one_plus_t, rational_to_f64, BivariatePolynomial};
pub(crate) use frequency::potential;
