//! Exact moment polynomials `P_{2k}(α, λ)` and `T_{2k}(α, λ)` in `ℚ[λ, t]`,
//! `t = cos 2πα`.
//!
//! The diagonal of `H_{α,λ,θ}` at the phases `0` and `α/2` is `2λ cos(mπα)`
//! with an integer harmonic `m = 2|n|` or `m = |2n+1|`. Window arithmetic is
//! therefore carried out exactly on sums `Σ a_{j,m} λ^j cos(mπα)` with integer
//! `a_{j,m}`, using `2 cos x cos y = cos(x+y) + cos(x−y)`. The assembled traces
//! are expanded through Chebyshev polynomials `cos mπα = T_m(c)` into
//! `ℚ[λ, c]` with `c = cos πα`, checked to contain only even powers of `c`,
//! and reduced with `c² = (1+t)/2`.
//!
//! With `A = tr H^{2k+1}_{α/2} R_{α/2}` and `B = tr H^{2k+1}_0 R_0` one has
//! `P_{2k} = 2(A − B)/(2k+1)` and `T_{2k} = A / 2^{2k+1}`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::base::{divisible_by_one_plus_t, BivariatePolynomial, Regime};
use crate::error::{AmoError, Result};

/// Practical bound on `k` for exact computation.
pub const MAX_K: u32 = 8;

/// One diagonal factor `2λ · T_m(c)` (or a constant when `lambda_degree` is
/// zero), with `c = cos πα`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChebyshevEntry {
    pub lambda_degree: u32,
    pub index: u32,
}

impl ChebyshevEntry {
    /// Value at a real `α` and `λ`.
    pub fn eval(&self, alpha: f64, lambda: f64) -> f64 {
        let c = (std::f64::consts::PI * self.index as f64 * alpha).cos();
        if self.lambda_degree == 0 {
            c
        } else {
            2.0 * lambda * c
        }
    }
}

/// Monomial coefficients of the Chebyshev polynomials `T_0 … T_n`.
pub fn chebyshev_table(n: usize) -> Vec<Vec<BigInt>> {
    let mut table: Vec<Vec<BigInt>> = Vec::with_capacity(n + 1);
    table.push(vec![BigInt::one()]);
    if n >= 1 {
        table.push(vec![BigInt::zero(), BigInt::one()]);
    }
    for m in 2..=n {
        let mut next = vec![BigInt::zero(); m + 1];
        for (i, c) in table[m - 1].iter().enumerate() {
            next[i + 1] += c * 2;
        }
        for (i, c) in table[m - 2].iter().enumerate() {
            next[i] -= c;
        }
        table.push(next);
    }
    table
}

/// An exact element `Σ a_{j,m} λ^j cos(mπα)` stored densely by λ-degree.
#[derive(Debug, Clone, Default, PartialEq)]
struct Harmonic {
    by_lambda: Vec<Vec<i128>>,
}

impl Harmonic {
    fn unit() -> Self {
        Harmonic {
            by_lambda: vec![vec![1]],
        }
    }

    fn is_zero(&self) -> bool {
        self.by_lambda.iter().all(|v| v.iter().all(|&x| x == 0))
    }

    fn add_assign(&mut self, other: &Harmonic) {
        if self.by_lambda.len() < other.by_lambda.len() {
            self.by_lambda.resize(other.by_lambda.len(), Vec::new());
        }
        for (dst, src) in self.by_lambda.iter_mut().zip(&other.by_lambda) {
            if dst.len() < src.len() {
                dst.resize(src.len(), 0);
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    /// `self · sign · 2λ cos(sπα)`.
    fn times_diagonal(&self, s: u32, sign: i128) -> Harmonic {
        let mut out = Harmonic {
            by_lambda: vec![Vec::new(); self.by_lambda.len() + 1],
        };
        for (j, row) in self.by_lambda.iter().enumerate() {
            let dst = &mut out.by_lambda[j + 1];
            let need = row.len() + s as usize;
            if dst.len() < need {
                dst.resize(need, 0);
            }
            for (m, &a) in row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let v = sign * a;
                dst[m + s as usize] += v;
                dst[(m as i64 - s as i64).unsigned_abs() as usize] += v;
            }
        }
        out
    }
}

/// A banded window over the harmonic ring for one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SymbolicPhase {
    Zero,
    HalfAlpha,
    Half,
    HalfOnePlusAlpha,
}

impl SymbolicPhase {
    /// The diagonal factor at site `n` as `(harmonic, sign)`.
    fn diagonal(&self, n: i64) -> (u32, i128) {
        match self {
            SymbolicPhase::Zero => ((2 * n).unsigned_abs() as u32, 1),
            SymbolicPhase::HalfAlpha => ((2 * n + 1).unsigned_abs() as u32, 1),
            SymbolicPhase::Half => ((2 * n).unsigned_abs() as u32, -1),
            SymbolicPhase::HalfOnePlusAlpha => ((2 * n + 1).unsigned_abs() as u32, -1),
        }
    }

    fn shift(&self) -> i64 {
        match self {
            SymbolicPhase::Zero | SymbolicPhase::Half => 0,
            _ => -1,
        }
    }
}

/// The symbolic window of `H_{α,λ,θ}` on `[−W, W]`.
#[derive(Debug, Clone)]
pub struct SymbolicWindow {
    radius: i64,
    phase: SymbolicPhase,
}

impl SymbolicWindow {
    fn new(radius: usize, phase: SymbolicPhase) -> Self {
        SymbolicWindow {
            radius: radius as i64,
            phase,
        }
    }

    /// The diagonal entry at site `n`.
    pub fn diagonal_entry(&self, n: i64) -> ChebyshevEntry {
        ChebyshevEntry {
            lambda_degree: 1,
            index: self.phase.diagonal(n).0,
        }
    }

    fn apply(&self, v: &[Harmonic]) -> Vec<Harmonic> {
        let r = self.radius;
        let size = v.len();
        (0..size)
            .map(|idx| {
                let n = idx as i64 - r;
                let mut acc = Harmonic::default();
                if !v[idx].is_zero() {
                    let (s, sign) = self.phase.diagonal(n);
                    acc.add_assign(&v[idx].times_diagonal(s, sign));
                }
                if idx > 0 {
                    acc.add_assign(&v[idx - 1]);
                }
                if idx + 1 < size {
                    acc.add_assign(&v[idx + 1]);
                }
                acc
            })
            .collect()
    }

    /// `Σ_i (H^power)_{i, s−i}` over the given index range, computed column by
    /// column with exact mat-vec products.
    fn reflected_trace(&self, power: usize, range: std::ops::RangeInclusive<i64>) -> Harmonic {
        let r = self.radius;
        let s = self.phase.shift();
        let mut total = Harmonic::default();
        for i in range {
            let col = s - i;
            let mut v = vec![Harmonic::default(); (2 * r + 1) as usize];
            v[(col + r) as usize] = Harmonic::unit();
            for _ in 0..power {
                v = self.apply(&v);
            }
            total.add_assign(&v[(i + r) as usize]);
        }
        total
    }
}

/// Expands `Σ a_{j,m} λ^j T_m(c)` into `ℚ[λ, c]`, asserts that only even
/// powers of `c` survive, and substitutes `c² = (1+t)/2`.
fn reduce_to_t(h: &Harmonic, k: u32) -> Result<BivariatePolynomial> {
    let max_m = h.by_lambda.iter().map(|v| v.len()).max().unwrap_or(0);
    let table = chebyshev_table(max_m.max(1));
    let mut out = BivariatePolynomial::zero();
    for (j, row) in h.by_lambda.iter().enumerate() {
        // Coefficients of c^s.
        let mut in_c: BTreeMap<usize, BigInt> = BTreeMap::new();
        for (m, &a) in row.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let a = BigInt::from(a);
            for (s, t) in table[m].iter().enumerate() {
                if !t.is_zero() {
                    *in_c.entry(s).or_insert_with(BigInt::zero) += &a * t;
                }
            }
        }
        in_c.retain(|_, v| !v.is_zero());
        if in_c.keys().any(|s| s % 2 == 1) {
            return Err(AmoError::OddPowerSurvived { k });
        }
        // c^{2u} = (1+t)^u / 2^u.
        for (s, b) in in_c {
            let u = s / 2;
            let denom = BigInt::one() << u;
            let mut binom = BigInt::one();
            for v in 0..=u {
                let coeff = BigRational::new(&b * &binom, denom.clone());
                out.add_term(j as u32, v as u32, coeff);
                binom = binom * BigInt::from(u - v) / BigInt::from(v + 1);
            }
        }
    }
    Ok(out)
}

/// Symbolic window radius `2k + 2`.
fn symbolic_radius(k: u32) -> usize {
    2 * k as usize + 2
}

/// `A = tr H^{2k+1}_{α/2} R_{α/2}` and `B = tr H^{2k+1}_0 R_0` in `ℚ[λ, t]`.
fn half_traces(k: u32) -> Result<(BivariatePolynomial, BivariatePolynomial)> {
    let power = 2 * k as usize + 1;
    let w = symbolic_radius(k);
    let kk = k as i64;
    let a = SymbolicWindow::new(w, SymbolicPhase::HalfAlpha).reflected_trace(power, -kk - 1..=kk);
    let b = SymbolicWindow::new(w, SymbolicPhase::Zero).reflected_trace(power, -kk - 1..=kk + 1);
    Ok((reduce_to_t(&a, k)?, reduce_to_t(&b, k)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CacheKey {
    Moment(u32),
    HalfTrace(u32),
}

fn cache() -> &'static Mutex<HashMap<CacheKey, BivariatePolynomial>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, BivariatePolynomial>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: CacheKey, build: impl FnOnce() -> Result<BivariatePolynomial>) -> Result<BivariatePolynomial> {
    if let Some(p) = cache().lock().expect("cache lock").get(&key) {
        return Ok(p.clone());
    }
    let p = build()?;
    cache().lock().expect("cache lock").insert(key, p.clone());
    Ok(p)
}

fn check_k(k: u32) -> Result<()> {
    if k > MAX_K {
        return Err(AmoError::InvalidInput(format!(
            "k = {k} exceeds the exact-arithmetic bound {MAX_K}"
        )));
    }
    Ok(())
}

/// `P_{2k}(α, λ)` with `c_{2k} = P_{2k}` for `λ < 1` and `c_{2k} = −P_{2k}`
/// for `λ > 1`.
///
/// The leading λ-coefficient is checked to be `−2^{2k+2}/(2k+1)`.
pub fn symbolic_moment(k: u32) -> Result<BivariatePolynomial> {
    check_k(k)?;
    cached(CacheKey::Moment(k), || {
        let (a, b) = half_traces(k)?;
        let factor = BigRational::new(BigInt::from(2), BigInt::from(2 * k + 1));
        let p = (&a - &b).scale(&factor);
        let lead = p.coeff(2 * k + 1, 0);
        let expected = BigRational::new(-(BigInt::one() << (2 * k + 2)), BigInt::from(2 * k + 1));
        if lead != expected || p.lambda_degree() != Some(2 * k + 1) {
            return Err(AmoError::InvariantViolation(format!(
                "leading coefficient of P_{} is {lead}, expected {expected}",
                2 * k
            )));
        }
        Ok(p)
    })
}

/// `T_{2k}(α, λ) = tr H^{2k+1}_{α/2} R_{α/2} / 2^{2k+1}`.
pub fn symbolic_t(k: u32) -> Result<BivariatePolynomial> {
    check_k(k)?;
    let a = cached(CacheKey::HalfTrace(k), || Ok(half_traces(k)?.0))?;
    Ok(a.scale(&BigRational::new(BigInt::one(), BigInt::one() << (2 * k + 1))))
}

/// Whether `P_{2k} = −λ^{2k+1} P_{2k}(1/λ)` holds as a ring identity.
pub fn verify_duality(k: u32) -> Result<bool> {
    let p = symbolic_moment(k)?;
    Ok(p.dual_transform(2 * k + 1)? == p)
}

/// Whether `(2k+1)/2^{2k+2} · P_{2k} = T_{2k}(λ) − λ^{2k+1} T_{2k}(1/λ)`.
pub fn verify_t_relation(k: u32) -> Result<bool> {
    let p = symbolic_moment(k)?;
    let t = symbolic_t(k)?;
    let d = 2 * k + 1;
    // −λ^d T(1/λ) is the dual transform of T.
    let rhs = &t + &t.dual_transform(d)?;
    let lhs = p.scale(&BigRational::new(BigInt::from(d), BigInt::one() << (2 * k + 2)));
    Ok(lhs == rhs)
}

/// The two coefficient patterns of `T_{2k}`: the `λ²` coefficient is
/// `(2k+1)/2 · (1 + t + … + t^{2k−1})` and the `λ^{2k}` coefficient is
/// `(2k+1)/2^k · (1+t)^k`. Also checks that the `λ^{2j}` coefficient is
/// divisible by `(1+t)^j`.
pub fn verify_t_patterns(k: u32) -> Result<bool> {
    let t = symbolic_t(k)?;
    if k == 0 {
        return Ok(t == BivariatePolynomial::one());
    }
    let kk = k as i64;
    let mut lambda2 = BivariatePolynomial::zero();
    for r in 0..2 * k {
        lambda2.add_term(2, r, BigRational::new(BigInt::from(2 * kk + 1), BigInt::from(2)));
    }
    let one_plus_t = &BivariatePolynomial::one() + &BivariatePolynomial::t();
    let top = one_plus_t
        .pow(k)
        .scale(&BigRational::new(BigInt::from(2 * kk + 1), BigInt::one() << k));
    let top = &top * &BivariatePolynomial::lambda().pow(2 * k);
    let slice = |j: u32| {
        let mut s = BivariatePolynomial::zero();
        for (&(jj, r), v) in t.terms() {
            if jj == j {
                s.add_term(jj, r, v.clone());
            }
        }
        s
    };
    let mut ok = slice(2) == lambda2;
    if k >= 2 {
        ok &= slice(2 * k) == top;
    }
    for j in 1..=k {
        ok &= divisible_by_one_plus_t(&t.lambda_coefficient(2 * j), j);
    }
    Ok(ok)
}

/// The four-traces combination with the even power `2k`, which must vanish
/// identically since the odd moments are zero. The individual traces are
/// not polynomials in `t`, so the cancellation is checked on the combined
/// harmonic sum.
pub fn even_power_combination(k: u32) -> Result<BivariatePolynomial> {
    check_k(k)?;
    let power = 2 * k as usize;
    let w = symbolic_radius(k);
    let span = k as i64 + 1;
    let mut total = Harmonic::default();
    for (phase, sign) in [
        (SymbolicPhase::Zero, -1),
        (SymbolicPhase::HalfAlpha, 1),
        (SymbolicPhase::Half, 1),
        (SymbolicPhase::HalfOnePlusAlpha, 1),
    ] {
        let mut h = SymbolicWindow::new(w, phase).reflected_trace(power, -span - 1..=span);
        if sign < 0 {
            for row in h.by_lambda.iter_mut() {
                for a in row.iter_mut() {
                    *a = -*a;
                }
            }
        }
        total.add_assign(&h);
    }
    reduce_to_t(&total, k)
}

/// `c_{2k}(α, λ) = sign(regime) · P_{2k}(α, λ)` for any real `α`.
pub fn evaluate_moment(k: u32, alpha: f64, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AmoError::InvalidInput(format!("coupling must be ≥ 0, got {lambda}")));
    }
    let p = symbolic_moment(k)?;
    let t = (2.0 * std::f64::consts::PI * alpha).cos();
    let regime = crate::base::Coupling::new(lambda)?.regime();
    let sign = match regime {
        Regime::Supercritical => -1.0,
        _ => 1.0,
    };
    Ok(sign * p.eval_exact(lambda, t))
}

/// `P_{2k} / (4(1 − λ))`, the moment of the normalised measure, as an exact
/// polynomial that is regular at `λ = 1`.
pub fn normalized_moment_polynomial(k: u32) -> Result<BivariatePolynomial> {
    let p = symbolic_moment(k)?;
    let q = p.div_one_minus_lambda()?;
    Ok(q.scale(&BigRational::new(BigInt::one(), BigInt::from(4))))
}

/// The `λ^j` coefficients of a polynomial, each written as a polynomial in
/// `t`, with any `(1+t)^m` factor pulled out. Used for the factored display of
/// `T_{2k}`.
pub fn factored_lambda_coefficients(p: &BivariatePolynomial) -> Vec<(u32, u32, Vec<BigRational>)> {
    let Some(dl) = p.lambda_degree() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for j in 0..=dl {
        let mut c = p.lambda_coefficient(j);
        if c.is_empty() {
            continue;
        }
        let mut m = 0;
        while c.len() > 1 && divisible_by_one_plus_t(&c, 1) {
            c = deflate_one_plus_t(&c);
            m += 1;
        }
        out.push((j, m, c));
    }
    out
}

fn deflate_one_plus_t(c: &[BigRational]) -> Vec<BigRational> {
    let n = c.len();
    let mut q = vec![BigRational::zero(); n - 1];
    let mut carry = BigRational::zero();
    for i in (1..n).rev() {
        let cur = &c[i] + &carry;
        q[i - 1] = cur.clone();
        carry = -cur;
    }
    q
}

/// Human-readable factored form of a polynomial's `λ^j` coefficients.
pub fn factored_display(p: &BivariatePolynomial) -> String {
    let mut parts = Vec::new();
    for (j, m, c) in factored_lambda_coefficients(p) {
        let mut inner = BivariatePolynomial::zero();
        for (r, v) in c.iter().enumerate() {
            inner.add_term(0, r as u32, v.clone());
        }
        let factor = match m {
            0 => String::new(),
            1 => "(1+t)·".to_string(),
            _ => format!("(1+t)^{m}·"),
        };
        let lam = match j {
            0 => String::new(),
            1 => "·λ".to_string(),
            _ => format!("·λ^{j}"),
        };
        let body = if inner.num_terms() == 1 && !inner.coeff(0, 0).is_zero() {
            let v = inner.coeff(0, 0);
            if v.is_negative() {
                format!("({inner})")
            } else {
                inner.to_string()
            }
        } else {
            format!("({inner})")
        };
        parts.push(format!("{factor}{body}{lam}"));
    }
    parts.join(" + ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn chebyshev_rows_match_cosines() {
        let table = chebyshev_table(12);
        for &x in &[0.1, 0.37, 0.9] {
            let c = (std::f64::consts::PI * x).cos();
            for (m, row) in table.iter().enumerate() {
                let v: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(s, b)| b.to_string().parse::<f64>().unwrap() * c.powi(s as i32))
                    .sum();
                assert!((v - (std::f64::consts::PI * m as f64 * x).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroth_moment() {
        let p = symbolic_moment(0).unwrap();
        assert_eq!(p, BivariatePolynomial::from_terms(&[(0, 0, 4, 1), (1, 0, -4, 1)]));
    }

    #[test]
    fn second_moment_terms() {
        let p = symbolic_moment(1).unwrap();
        // (16/3)[1 − 3/2 λ(1+t) + 3/2 λ²(1+t) − λ³]
        let expected = BivariatePolynomial::from_terms(&[
            (0, 0, 16, 3),
            (1, 0, -8, 1),
            (1, 1, -8, 1),
            (2, 0, 8, 1),
            (2, 1, 8, 1),
            (3, 0, -16, 3),
        ]);
        assert_eq!(p, expected);
    }

    #[test]
    fn t_two_terms() {
        let t = symbolic_t(1).unwrap();
        let expected = BivariatePolynomial::from_terms(&[(0, 0, 1, 1), (2, 0, 3, 2), (2, 1, 3, 2)]);
        assert_eq!(t, expected);
    }

    #[test]
    fn dualities_small_k() {
        for k in 0..4 {
            assert!(verify_duality(k).unwrap(), "k = {k}");
            assert!(verify_t_relation(k).unwrap(), "k = {k}");
            assert!(verify_t_patterns(k).unwrap(), "k = {k}");
        }
    }

    #[test]
    fn even_powers_cancel() {
        for k in 0..4 {
            assert!(even_power_combination(k).unwrap().is_zero(), "k = {k}");
        }
    }

    #[test]
    fn half_frequency_closed_form() {
        for k in 0..5u32 {
            for &l in &[0.2, 0.5, 0.9] {
                let v = evaluate_moment(k, 0.5, l).unwrap();
                let expected =
                    -(2f64.powi(2 * k as i32 + 2) / (2 * k + 1) as f64) * (l.powi(2 * k as i32 + 1) - 1.0);
                assert!((v - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn free_moments() {
        for k in 0..5u32 {
            let v = evaluate_moment(k, 0.3, 0.0).unwrap();
            assert!((v - 2f64.powi(2 * k as i32 + 2) / (2 * k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_second_moment() {
        let n = normalized_moment_polynomial(1).unwrap();
        // (3/4) c̃₂ = 1 − (1+3t)/2 · λ + λ²
        let expected = BivariatePolynomial::from_terms(&[
            (0, 0, 1, 1),
            (1, 0, -1, 2),
            (1, 1, -3, 2),
            (2, 0, 1, 1),
        ]);
        assert_eq!(n.scale(&r(3, 4)), expected);
    }

    #[test]
    fn factored_display_pulls_out_one_plus_t() {
        let t = symbolic_t(1).unwrap();
        assert_eq!(factored_display(&t), "1 + (1+t)·3/2·λ^2");
    }

    #[test]
    fn leading_coefficient_pattern() {
        for k in 0..5u32 {
            let p = symbolic_moment(k).unwrap();
            assert_eq!(p.coeff(2 * k + 1, 0), r(-(1 << (2 * k + 2)), 2 * k as i64 + 1));
        }
    }
}
