//! Exact polynomials in `(λ, t)` with rational coefficients.
//!
//! The moment polynomials live in `ℚ[λ, t]` with `t = cos 2πα`. Coefficients
//! are stored sparsely and zero coefficients are never kept, so degree queries
//! and equality are exact.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{Map, Value};

use crate::error::{AmoError, Result};

/// Converts an exact rational to the nearest-ish `f64`.
pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// A polynomial `Σ q_{j,r} λ^j t^r` over the rationals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BivariatePolynomial {
    coeffs: BTreeMap<(u32, u32), BigRational>,
}

impl BivariatePolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        Self::monomial(0, 0, c)
    }

    /// `c · λ^j t^r`.
    pub fn monomial(j: u32, r: u32, c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(j, r, c);
        p
    }

    pub fn lambda() -> Self {
        Self::monomial(1, 0, BigRational::one())
    }

    pub fn t() -> Self {
        Self::monomial(0, 1, BigRational::one())
    }

    /// Builds a polynomial from `(j, r, numerator, denominator)` terms.
    pub fn from_terms(terms: &[(u32, u32, i64, i64)]) -> Self {
        let mut p = Self::zero();
        for &(j, r, n, d) in terms {
            p.add_term(j, r, BigRational::new(n.into(), d.into()));
        }
        p
    }

    /// Adds `c · λ^j t^r` in place, dropping the entry if it cancels.
    pub fn add_term(&mut self, j: u32, r: u32, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry((j, r)).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(&(j, r));
        }
    }

    pub fn coeff(&self, j: u32, r: u32) -> BigRational {
        self.coeffs.get(&(j, r)).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &BigRational)> {
        self.coeffs.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn lambda_degree(&self) -> Option<u32> {
        self.coeffs.keys().map(|k| k.0).max()
    }

    pub fn t_degree(&self) -> Option<u32> {
        self.coeffs.keys().map(|k| k.1).max()
    }

    /// The coefficient of `λ^j` as a dense polynomial in `t`.
    pub fn lambda_coefficient(&self, j: u32) -> Vec<BigRational> {
        let deg = self
            .coeffs
            .keys()
            .filter(|k| k.0 == j)
            .map(|k| k.1)
            .max();
        match deg {
            None => Vec::new(),
            Some(d) => (0..=d).map(|r| self.coeff(j, r)).collect(),
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        let mut out = Self::zero();
        for (&(j, r), v) in &self.coeffs {
            out.add_term(j, r, v * c);
        }
        out
    }

    /// Partial derivative with respect to `λ`.
    pub fn lambda_derivative(&self) -> Self {
        let mut out = Self::zero();
        for (&(j, r), v) in &self.coeffs {
            if j > 0 {
                out.add_term(j - 1, r, v * BigRational::from_integer(j.into()));
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::one();
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// Floating-point evaluation, Horner in `t` inside Horner in `λ`.
    pub fn eval(&self, lambda: f64, t: f64) -> f64 {
        let Some(dl) = self.lambda_degree() else {
            return 0.0;
        };
        let mut acc = 0.0;
        for j in (0..=dl).rev() {
            let c = self.lambda_coefficient(j);
            let mut inner = 0.0;
            for v in c.iter().rev() {
                inner = inner * t + rational_to_f64(v);
            }
            acc = acc * lambda + inner;
        }
        acc
    }

    /// Evaluation in exact arithmetic at the binary values of `λ` and `t`,
    /// rounded once at the end.
    pub fn eval_exact(&self, lambda: f64, t: f64) -> f64 {
        let (Some(l), Some(tt)) = (BigRational::from_float(lambda), BigRational::from_float(t))
        else {
            return f64::NAN;
        };
        rational_to_f64(&self.eval_rational(&l, &tt))
    }

    pub fn eval_rational(&self, lambda: &BigRational, t: &BigRational) -> BigRational {
        let Some(dl) = self.lambda_degree() else {
            return BigRational::zero();
        };
        let mut acc = BigRational::zero();
        for j in (0..=dl).rev() {
            let mut inner = BigRational::zero();
            for v in self.lambda_coefficient(j).iter().rev() {
                inner = inner * t + v;
            }
            acc = acc * lambda + inner;
        }
        acc
    }

    /// `−λ^d · P(1/λ, t)`, defined when the λ-degree of `P` is at most `d`.
    /// Applying it twice with the same `d` returns `P`.
    pub fn dual_transform(&self, d: u32) -> Result<Self> {
        if let Some(deg) = self.lambda_degree() {
            if deg > d {
                return Err(AmoError::DegreeOverflow { degree: deg, bound: d });
            }
        }
        let mut out = Self::zero();
        for (&(j, r), v) in &self.coeffs {
            out.add_term(d - j, r, -v.clone());
        }
        Ok(out)
    }

    /// Exact quotient `P / (1 − λ)`; fails when `P(1, t)` is not identically
    /// zero.
    pub fn div_one_minus_lambda(&self) -> Result<Self> {
        let Some(dl) = self.lambda_degree() else {
            return Ok(Self::zero());
        };
        // P = (1 − λ) S with s_j = a_0 + … + a_j and remainder a_0 + … + a_n.
        let mut out = Self::zero();
        let mut running = Self::zero();
        for j in 0..=dl {
            running = &running + &self.lambda_slice(j);
            if j < dl {
                for (&(_, r), v) in &running.coeffs {
                    out.add_term(j, r, v.clone());
                }
            }
        }
        if !running.is_zero() {
            return Err(AmoError::InexactDivision(format!(
                "P(λ=1, t) = {running} is not zero"
            )));
        }
        Ok(out)
    }

    /// The terms with λ-degree `j`, shifted to λ-degree 0.
    fn lambda_slice(&self, j: u32) -> Self {
        let mut out = Self::zero();
        for (&(jj, r), v) in &self.coeffs {
            if jj == j {
                out.add_term(0, r, v.clone());
            }
        }
        out
    }

    /// Machine-readable form `{"j,r": "num/den"}`.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (&(j, r), v) in &self.coeffs {
            m.insert(format!("{j},{r}"), Value::String(rational_string(v)));
        }
        Value::Object(m)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |what: &str| AmoError::InvalidInput(format!("bad polynomial JSON: {what}"));
        let obj = v.as_object().ok_or_else(|| bad("not an object"))?;
        let mut p = Self::zero();
        for (key, val) in obj {
            let (j, r) = key.split_once(',').ok_or_else(|| bad(key))?;
            let j: u32 = j.trim().parse().map_err(|_| bad(key))?;
            let r: u32 = r.trim().parse().map_err(|_| bad(key))?;
            let s = val.as_str().ok_or_else(|| bad(key))?;
            let c = parse_rational(s).ok_or_else(|| bad(s))?;
            p.add_term(j, r, c);
        }
        Ok(p)
    }
}

fn rational_string(v: &BigRational) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(BigRational::new(n, d))
        }
        None => Some(BigRational::from_integer(s.trim().parse().ok()?)),
    }
}

/// Whether a dense polynomial in `t` is divisible by `(1 + t)^power`.
pub fn divisible_by_one_plus_t(coeffs: &[BigRational], power: u32) -> bool {
    let mut c: Vec<BigRational> = coeffs.to_vec();
    while c.last().is_some_and(|x| x.is_zero()) {
        c.pop();
    }
    for _ in 0..power {
        if c.is_empty() {
            return true;
        }
        // Synthetic division by (t + 1): evaluate at t = −1 and deflate.
        let n = c.len();
        let mut quotient = vec![BigRational::zero(); n.saturating_sub(1)];
        let mut carry = BigRational::zero();
        for i in (0..n).rev() {
            let cur = &c[i] + &carry;
            if i == 0 {
                if !cur.is_zero() {
                    return false;
                }
            } else {
                quotient[i - 1] = cur.clone();
                carry = -cur;
            }
        }
        c = quotient;
    }
    true
}

impl fmt::Display for BivariatePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (&(j, r), v) in &self.coeffs {
            let neg = v.is_negative();
            let mag = v.abs();
            if first {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            first = false;
            let mut factors: Vec<String> = Vec::new();
            if !mag.is_one() || (j == 0 && r == 0) {
                factors.push(rational_string(&mag));
            }
            match j {
                0 => {}
                1 => factors.push("λ".into()),
                _ => factors.push(format!("λ^{j}")),
            }
            match r {
                0 => {}
                1 => factors.push("t".into()),
                _ => factors.push(format!("t^{r}")),
            }
            f.write_str(&factors.join("·"))?;
        }
        Ok(())
    }
}

impl Add for &BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn add(self, rhs: &BivariatePolynomial) -> BivariatePolynomial {
        let mut out = self.clone();
        for (&(j, r), v) in &rhs.coeffs {
            out.add_term(j, r, v.clone());
        }
        out
    }
}

impl Sub for &BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn sub(self, rhs: &BivariatePolynomial) -> BivariatePolynomial {
        let mut out = self.clone();
        for (&(j, r), v) in &rhs.coeffs {
            out.add_term(j, r, -v.clone());
        }
        out
    }
}

impl Mul for &BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn mul(self, rhs: &BivariatePolynomial) -> BivariatePolynomial {
        let mut out = BivariatePolynomial::zero();
        for (&(j1, r1), v1) in &self.coeffs {
            for (&(j2, r2), v2) in &rhs.coeffs {
                out.add_term(j1 + j2, r1 + r2, v1 * v2);
            }
        }
        out
    }
}

impl Neg for &BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn neg(self) -> BivariatePolynomial {
        self.scale(&-BigRational::one())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for BivariatePolynomial {
            type Output = BivariatePolynomial;
            fn $m(self, rhs: BivariatePolynomial) -> BivariatePolynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn neg(self) -> BivariatePolynomial {
        -&self
    }
}
