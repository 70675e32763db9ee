//! Frequency, coupling and phase types.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;

use crate::error::{AmoError, Result};

/// A reduced fraction `p/q` with `0 ≤ p < q`, or `0/1`.
///
/// Unreduced or out-of-range input is reduced modulo 1 on construction, so
/// `2/4` becomes `1/2` and `1/1` becomes `0/1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RationalFrequency {
    p: u64,
    q: u64,
}

impl RationalFrequency {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if q <= 0 {
            return Err(AmoError::InvalidInput(format!(
                "frequency denominator must be positive, got {q}"
            )));
        }
        let p = p.rem_euclid(q);
        let g = p.gcd(&q);
        Ok(RationalFrequency {
            p: (p / g) as u64,
            q: (q / g) as u64,
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// `t = cos 2πα`, the variable of the moment polynomials.
    pub fn t(&self) -> f64 {
        (2.0 * PI * self.value()).cos()
    }

    /// The phase at which the period-`q` trace is largest: `α/2` for odd `p`
    /// and `(1+α)/2` for even `p`. In both cases `2θ₊ ≡ α (mod 1)` and
    /// `cos 2πqθ₊ = −1`.
    pub fn theta_plus(&self) -> Phase {
        let (num, den) = self.theta_plus_fraction();
        Phase::new(num as f64 / den as f64)
    }

    /// `θ₊` as an exact fraction `(num, 2q)`.
    pub fn theta_plus_fraction(&self) -> (u64, u64) {
        if self.p % 2 == 1 {
            (self.p, 2 * self.q)
        } else {
            (self.q + self.p, 2 * self.q)
        }
    }

    /// Every reduced `p/q` with `1 ≤ q ≤ qmax`, ordered by `q` then `p`.
    pub fn enumerate(qmax: u64) -> Vec<RationalFrequency> {
        let mut out = Vec::new();
        for q in 1..=qmax {
            for p in 0..q {
                if p.gcd(&q) == 1 {
                    out.push(RationalFrequency { p, q });
                }
            }
        }
        out
    }
}

impl fmt::Display for RationalFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl FromStr for RationalFrequency {
    type Err = AmoError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AmoError::InvalidInput(format!("expected a fraction p/q, got {s:?}"));
        let (p, q) = s.trim().split_once('/').ok_or_else(bad)?;
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        RationalFrequency::new(p, q)
    }
}

/// A frequency that is either an exact fraction or an arbitrary real number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Rational(RationalFrequency),
    Real(f64),
}

impl Frequency {
    pub fn value(&self) -> f64 {
        match self {
            Frequency::Rational(r) => r.value(),
            Frequency::Real(x) => *x,
        }
    }

    pub fn t(&self) -> f64 {
        match self {
            Frequency::Rational(r) => r.t(),
            Frequency::Real(x) => (2.0 * PI * x).cos(),
        }
    }

    pub fn as_rational(&self) -> Option<RationalFrequency> {
        match self {
            Frequency::Rational(r) => Some(*r),
            Frequency::Real(_) => None,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Rational(r) => write!(f, "{r}"),
            Frequency::Real(x) => write!(f, "{}", crate::format::fmt_g(*x)),
        }
    }
}

impl FromStr for Frequency {
    type Err = AmoError;

    /// Fractions stay exact; decimals are kept as reals and never coerced.
    fn from_str(s: &str) -> Result<Self> {
        if s.contains('/') {
            return s.parse().map(Frequency::Rational);
        }
        let x: f64 = s
            .trim()
            .parse()
            .map_err(|_| AmoError::InvalidInput(format!("expected p/q or a decimal, got {s:?}")))?;
        if !x.is_finite() {
            return Err(AmoError::InvalidInput(format!("frequency must be finite, got {s:?}")));
        }
        Ok(Frequency::Real(x))
    }
}

/// Coupling regime relative to the critical value λ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    /// Sign relating the moment `c_{2k}` to the polynomial `P_{2k}`.
    pub fn sign(&self) -> f64 {
        match self {
            Regime::Subcritical => 1.0,
            Regime::Critical => 0.0,
            Regime::Supercritical => -1.0,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        };
        f.write_str(s)
    }
}

/// A nonnegative coupling constant `λ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Coupling(f64);

impl Coupling {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(AmoError::InvalidInput(format!(
                "coupling must be a finite nonnegative number, got {lambda}"
            )));
        }
        Ok(Coupling(lambda))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn regime(&self) -> Regime {
        if self.0 < 1.0 {
            Regime::Subcritical
        } else if self.0 > 1.0 {
            Regime::Supercritical
        } else {
            Regime::Critical
        }
    }
}

/// A phase `θ` stored by its representative in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Phase(f64);

impl Phase {
    pub fn new(theta: f64) -> Self {
        let r = theta - theta.floor();
        Phase(if r >= 1.0 { 0.0 } else { r })
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// The four reflection-symmetric phases `0, α/2, 1/2, (1+α)/2`.
    pub fn distinguished(alpha: f64) -> [Phase; 4] {
        [
            Phase::new(0.0),
            Phase::new(alpha / 2.0),
            Phase::new(0.5),
            Phase::new((1.0 + alpha) / 2.0),
        ]
    }
}

/// `V(θ) = 2λ cos 2πθ`.
pub(crate) fn potential(lambda: f64, theta: f64) -> f64 {
    2.0 * lambda * (2.0 * PI * theta).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_on_construction() {
        let a = RationalFrequency::new(2, 4).unwrap();
        assert_eq!((a.p(), a.q()), (1, 2));
        let b = RationalFrequency::new(1, 1).unwrap();
        assert_eq!((b.p(), b.q()), (0, 1));
        let c = RationalFrequency::new(-1, 3).unwrap();
        assert_eq!((c.p(), c.q()), (2, 3));
        assert!(RationalFrequency::new(1, 0).is_err());
    }

    #[test]
    fn parses_fractions_and_decimals() {
        let a: RationalFrequency = "3/9".parse().unwrap();
        assert_eq!(a.to_string(), "1/3");
        assert!("abc".parse::<RationalFrequency>().is_err());
        assert!(matches!("0.25".parse::<Frequency>().unwrap(), Frequency::Real(_)));
        assert!(matches!("1/4".parse::<Frequency>().unwrap(), Frequency::Rational(_)));
    }

    #[test]
    fn theta_plus_branches() {
        let half = RationalFrequency::new(1, 2).unwrap();
        assert!((half.theta_plus().value() - 0.25).abs() < 1e-15);
        let two_fifths = RationalFrequency::new(2, 5).unwrap();
        assert!((two_fifths.theta_plus().value() - 0.7).abs() < 1e-15);
        let zero = RationalFrequency::new(0, 1).unwrap();
        assert!((zero.theta_plus().value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_plus_is_self_reflected_and_extremal() {
        for a in RationalFrequency::enumerate(25) {
            let tp = a.theta_plus().value();
            let lhs = Phase::new(-tp).value();
            let rhs = Phase::new(tp - a.value()).value();
            let d = (lhs - rhs).abs();
            assert!(d.min(1.0 - d) < 1e-12, "{a}");
            let c = (2.0 * PI * a.q() as f64 * tp).cos();
            assert!((c + 1.0).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(Coupling::new(0.5).unwrap().regime(), Regime::Subcritical);
        assert_eq!(Coupling::new(1.0).unwrap().regime(), Regime::Critical);
        assert_eq!(Coupling::new(2.0).unwrap().regime(), Regime::Supercritical);
        assert!(Coupling::new(-0.1).is_err());
    }

    #[test]
    fn phase_representative() {
        assert_eq!(Phase::new(-0.25).value(), 0.75);
        assert_eq!(Phase::new(1.0).value(), 0.0);
        assert_eq!(Phase::new(-1e-20).value(), 0.0);
    }

    #[test]
    fn enumeration_counts_farey_fractions() {
        // 1 + φ(2) + φ(3) + φ(4) + φ(5) = 1 + 1 + 2 + 2 + 4
        assert_eq!(RationalFrequency::enumerate(5).len(), 10);
    }
}
