//! Spectra of the almost Mathieu operator, with the measure on its
//! intersection spectrum and the moment polynomials of that measure
//!
//! ```text
//! (H ψ)_n = ψ_{n+1} + ψ_{n-1} + 2λ cos 2π(nα + θ) ψ_n
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`base`] holds frequencies, couplings, phases, interval unions and exact
//!   bivariate polynomials over the rationals.
//! * [`cocycle`] builds transfer matrices and the Chambers polynomial `Q_λ(E)`.
//! * [`spectral`] builds the periodic and antiperiodic `q × q` operators and
//!   assembles the union spectrum `Σ⁺` and the intersection spectrum `Σ⁻`.
//! * [`traces`] evaluates the two-traces and four-traces formulas on banded
//!   windows and checks the rational Fourier duality.
//! * [`sympoly`] computes the moment polynomials `P_{2k}` and `T_{2k}` exactly.
//! * [`funcalc`] computes resolvents and `Φ(H)` through Cauchy contour integrals.
//! * [`measures`] treats `μ⁻` and its normalisation as objects with moments.
//! * [`verify`] bundles the invariant suites used by the `amo verify` command.
//! * [`cli`] is the command-line front end.

pub mod base;
pub mod cli;
pub mod cocycle;
pub mod error;
pub mod format;
pub mod funcalc;
pub mod measures;
pub mod spectral;
pub mod sympoly;
pub mod traces;
pub mod verify;

pub use base::{
    BivariatePolynomial, Coupling, Frequency, IntervalUnion, Phase, RationalFrequency, Regime,
};
pub use error::{AmoError, Result};
