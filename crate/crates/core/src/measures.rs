//! The measure `μ⁻_{α,λ}`, Lebesgue measure restricted to the intersection
//! spectrum, and its normalisation `μ̃ = μ⁻ / |4 − 4λ|`.
//!
//! For rational `α` the band list gives closed-form oracles for moments and
//! for integrals of functions supplied through an antiderivative. At `λ = 1`
//! the normalised measure is the atomic limit carried by the roots of `Q_1`.

use std::sync::OnceLock;

use rayon::prelude::*;
use twofloat::TwoFloat;

use crate::base::{Frequency, RationalFrequency, Regime};
use crate::cocycle::{chambers_value, chambers_value_extended};
use crate::error::{AmoError, Result};
use crate::funcalc::gauss_legendre;
use crate::spectral::{intersection_spectrum, level_roots, spectrum_union, OrderedBandList};
use crate::sympoly::{evaluate_moment, normalized_moment_polynomial};

/// Largest denominator handled by the band oracles.
pub const MAX_ORACLE_Q: u64 = 256;

/// `μ⁻_{p/q,λ}` as a list of bands.
#[derive(Debug, Clone)]
pub struct SpectralMeasure {
    pub bands: OrderedBandList,
    pub regime: Regime,
    pub mass: f64,
    edges: OnceLock<Vec<(TwoFloat, TwoFloat)>>,
}

impl SpectralMeasure {
    pub fn new(alpha: &RationalFrequency, lambda: f64) -> Result<Self> {
        let bands = intersection_spectrum(alpha, lambda)?;
        let regime = crate::base::Coupling::new(lambda)?.regime();
        let mass = bands.measure();
        Ok(SpectralMeasure {
            bands,
            regime,
            mass,
            edges: OnceLock::new(),
        })
    }

    /// Band edges polished to double-double accuracy.
    ///
    /// High moments amplify an edge error `δ` by `|E|^n`, so `f64` edges
    /// alone cap the absolute accuracy of `c_n` near `ulp(E)·|E|^n`.
    pub fn extended_edges(&self) -> &[(TwoFloat, TwoFloat)] {
        self.edges.get_or_init(|| {
            let alpha = &self.bands.alpha;
            let lambda = self.bands.lambda;
            let level = TwoFloat::from(2.0)
                * (TwoFloat::from(1.0) - TwoFloat::from(lambda).powi(alpha.q() as i32)).abs();
            self.bands
                .bands
                .par_iter()
                .map(|b| {
                    if lambda == 1.0 {
                        (TwoFloat::from(b.lo), TwoFloat::from(b.hi))
                    } else {
                        (
                            polish_edge(alpha, lambda, level, b.lo),
                            polish_edge(alpha, lambda, level, b.hi),
                        )
                    }
                })
                .collect()
        })
    }

    /// `∫ x^n dμ⁻` by band-wise closed-form integration over the polished
    /// edges, accumulated in double-double arithmetic.
    pub fn monomial(&self, n: u32) -> f64 {
        let total = self
            .extended_edges()
            .iter()
            .fold(TwoFloat::from(0.0), |acc, &(a, b)| acc + power_increment(a, b, n + 1));
        f64::from(total / TwoFloat::from((n + 1) as f64))
    }

    /// `Σ_j Φ(b_j) − Φ(a_j)` for an antiderivative `Φ`.
    pub fn increment(&self, antiderivative: impl Fn(f64) -> f64) -> f64 {
        self.bands
            .bands
            .iter()
            .map(|b| antiderivative(b.hi) - antiderivative(b.lo))
            .sum()
    }

    /// `∫ φ dμ⁻` by 32-point Gauss–Legendre quadrature on each band.
    pub fn integrate_density(&self, density: impl Fn(f64) -> f64) -> f64 {
        let (x, w) = gauss_legendre(32);
        self.bands
            .bands
            .iter()
            .map(|b| {
                let half = 0.5 * (b.hi - b.lo);
                let mid = 0.5 * (b.hi + b.lo);
                half * x.iter().zip(&w).map(|(x, w)| w * density(mid + half * x)).sum::<f64>()
            })
            .sum()
    }
}

/// `b^n − a^n` as `(b − a) Σ_i b^i a^{n−1−i}`, which keeps full relative
/// accuracy for narrow bands.
fn power_increment(a: TwoFloat, b: TwoFloat, n: u32) -> TwoFloat {
    let mut sum = TwoFloat::from(0.0);
    let mut bp = TwoFloat::from(1.0);
    for i in 0..n {
        sum += bp * a.powi((n - 1 - i) as i32);
        bp *= b;
    }
    (b - a) * sum
}

/// Newton steps on `Q_λ(E) = ±level` in double-double arithmetic, starting
/// from an `f64` edge. The sign of the level is the one `Q_λ` is closest to.
/// If the iteration moves further than an `f64` edge can be wrong, the
/// original edge is kept.
fn polish_edge(alpha: &RationalFrequency, lambda: f64, level: TwoFloat, e0: f64) -> TwoFloat {
    let start = TwoFloat::from(e0);
    let (v0, _) = chambers_value_extended(alpha, lambda, start);
    let target = if v0 >= TwoFloat::from(0.0) { level } else { -level };
    let mut e = start;
    for _ in 0..5 {
        let (v, d) = chambers_value_extended(alpha, lambda, e);
        if d == TwoFloat::from(0.0) {
            break;
        }
        let step = (v - target) / d;
        e -= step;
        if step.abs() <= TwoFloat::from(1e-31 * e0.abs().max(1.0)) {
            break;
        }
    }
    if (e - start).abs() > TwoFloat::from(1e-9 * e0.abs().max(1.0)) {
        log::warn!("edge polishing for {alpha}, λ = {lambda} moved {e0} too far; keeping it");
        start
    } else {
        e
    }
}

fn oracle_alpha(alpha: &RationalFrequency) -> Result<()> {
    if alpha.q() > MAX_ORACLE_Q {
        return Err(AmoError::InvalidInput(format!(
            "band oracles need q ≤ {MAX_ORACLE_Q}, got {alpha}"
        )));
    }
    Ok(())
}

/// `c_n(α, λ) = ∫ x^n dμ⁻_{α,λ}` by exact band-wise integration.
pub fn integrate_monomial(alpha: &RationalFrequency, lambda: f64, n: u32) -> Result<f64> {
    oracle_alpha(alpha)?;
    Ok(SpectralMeasure::new(alpha, lambda)?.monomial(n))
}

/// `∫ φ dμ⁻_{α,λ}` given an antiderivative `Φ` of `φ`.
pub fn integrate_function(
    alpha: &RationalFrequency,
    lambda: f64,
    antiderivative: impl Fn(f64) -> f64,
) -> Result<f64> {
    oracle_alpha(alpha)?;
    Ok(SpectralMeasure::new(alpha, lambda)?.increment(antiderivative))
}

/// `c̃_{2k}(α, λ) = ∫ x^{2k} dμ̃_{α,λ}`.
///
/// For `λ ≠ 1` this is `c_{2k} / |4 − 4λ|`, from the band oracle when `α` is
/// a fraction and from the moment polynomial otherwise. At `λ = 1` it is the
/// exact quotient `P_{2k} / (4(1 − λ))` evaluated at `λ = 1`.
pub fn normalized_moment(alpha: &Frequency, lambda: f64, k: u32) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(AmoError::InvalidInput(format!("coupling must be > 0, got {lambda}")));
    }
    if lambda == 1.0 {
        let p = normalized_moment_polynomial(k)?;
        return Ok(p.eval_exact(1.0, alpha.t()));
    }
    let raw = match alpha {
        Frequency::Rational(r) if r.q() <= MAX_ORACLE_Q => integrate_monomial(r, lambda, 2 * k)?,
        _ => evaluate_moment(k, alpha.value(), lambda)?,
    };
    Ok(raw / (4.0 - 4.0 * lambda).abs())
}

/// A finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    /// `(E_j, w_j)` in increasing order of energy.
    pub atoms: Vec<(f64, f64)>,
    /// `Σ_j 1/|Q'_1(E_j)|` before normalisation.
    pub raw_weight_sum: f64,
}

impl AtomicMeasure {
    /// `Σ_j w_j E_j^n`.
    pub fn moment(&self, n: u32) -> f64 {
        self.atoms.iter().map(|(e, w)| w * e.powi(n as i32)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }
}

/// `μ̃_{p/q,1}`: atoms at the `q` roots of `Q_1` with weights proportional to
/// `1/|Q'_1(E_j)|`, normalised to total mass one.
pub fn atomic_limit(alpha: &RationalFrequency) -> Result<AtomicMeasure> {
    let q = alpha.q() as usize;
    let roots = level_roots(alpha, 1.0, 0.0)?;
    if roots.len() != q {
        return Err(AmoError::RootCountMismatch {
            q: q as u64,
            lambda: 1.0,
            expected: q,
            found: roots.len(),
        });
    }
    let mut raw = Vec::with_capacity(q);
    for e in roots {
        let d = chambers_value(alpha, 1.0, e).1;
        if d.abs() < 1e-10 {
            return Err(AmoError::DegenerateRoot {
                energy: e,
                derivative: d,
            });
        }
        raw.push((e, 1.0 / d.abs()));
    }
    let raw_weight_sum: f64 = raw.iter().map(|a| a.1).sum();
    let atoms = raw
        .into_iter()
        .map(|(e, w)| (e, w / raw_weight_sum))
        .collect();
    Ok(AtomicMeasure {
        atoms,
        raw_weight_sum,
    })
}

/// `|Σ⁻_{α,λ} ∩ [lo, hi]|`, refusing endpoints inside `Σ⁺`.
pub fn gap_measure(alpha: &RationalFrequency, lambda: f64, lo: f64, hi: f64) -> Result<f64> {
    oracle_alpha(alpha)?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(AmoError::InvalidInput(format!("need finite lo ≤ hi, got [{lo}, {hi}]")));
    }
    let plus = spectrum_union(alpha, lambda)?;
    for e in [lo, hi] {
        if plus.contains(e, 0.0) {
            return Err(AmoError::EndpointInSpectrum { energy: e });
        }
    }
    Ok(SpectralMeasure::new(alpha, lambda)?.bands.union().measure_within(lo, hi))
}

/// A sequence of frequencies approaching a limit.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSpec {
    /// `α_n = 1/n` for `n = 1 … n_max`, approaching `0`.
    Reciprocal { n_max: u64 },
    /// Continued-fraction convergents of a real target.
    Convergents { target: f64, count: usize },
    /// The same fraction repeated.
    Constant { alpha: RationalFrequency, count: usize },
}

impl SequenceSpec {
    /// The terms `α_n` with their indices.
    pub fn terms(&self) -> Vec<(u64, RationalFrequency)> {
        match self {
            SequenceSpec::Reciprocal { n_max } => (1..=*n_max)
                .map(|n| (n, RationalFrequency::new(1, n as i64).expect("positive denominator")))
                .collect(),
            SequenceSpec::Convergents { target, count } => convergents(*target, *count)
                .into_iter()
                .enumerate()
                .map(|(i, r)| (i as u64 + 1, r))
                .collect(),
            SequenceSpec::Constant { alpha, count } => {
                (1..=*count as u64).map(|n| (n, *alpha)).collect()
            }
        }
    }

    /// The limiting frequency.
    pub fn limit(&self) -> Frequency {
        match self {
            SequenceSpec::Reciprocal { .. } => {
                Frequency::Rational(RationalFrequency::new(0, 1).expect("valid"))
            }
            SequenceSpec::Convergents { target, .. } => Frequency::Real(*target),
            SequenceSpec::Constant { alpha, .. } => Frequency::Rational(*alpha),
        }
    }
}

/// The first `count` continued-fraction convergents `p_n/q_n` of `x`,
/// stopping early once the expansion terminates or `q` exceeds the oracle
/// bound.
pub fn convergents(x: f64, count: usize) -> Vec<RationalFrequency> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut rest = x;
    for _ in 0..count {
        let a = rest.floor();
        let (p2, q2) = (a as i64 * p1 + p0, a as i64 * q1 + q0);
        if q2 as u64 > MAX_ORACLE_Q {
            break;
        }
        out.push(RationalFrequency::new(p2, q2).expect("positive denominator"));
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = rest - a;
        if frac.abs() < 1e-12 {
            break;
        }
        rest = 1.0 / frac;
    }
    out
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    pub alpha: RationalFrequency,
    pub k: u32,
    /// `c_{2k}(α_n, λ)` from the band oracle.
    pub value: f64,
    /// `c_{2k}` of the limit.
    pub limit: f64,
}

impl ConvergenceRow {
    pub fn difference(&self) -> f64 {
        (self.value - self.limit).abs()
    }
}

/// `c_{2k}` of the limit measure. At `α = 0` this is Lebesgue measure on
/// `[−2|1−λ|, 2|1−λ|]` with moments `2(2|1−λ|)^{2k+1}/(2k+1)`; otherwise the
/// moment polynomial.
fn limit_moment(limit: &Frequency, lambda: f64, k: u32) -> Result<f64> {
    if limit.value() == 0.0 {
        let half = 2.0 * (1.0 - lambda).abs();
        return Ok(2.0 * half.powi(2 * k as i32 + 1) / (2 * k + 1) as f64);
    }
    evaluate_moment(k, limit.value(), lambda)
}

/// Moments `c_{2k}(α_n, λ)` for `k = 0 … k_max` along a sequence, alongside
/// the moments of the limit. Rows are ordered by `n`, then `k`.
pub fn convergence_experiment(
    sequence: &SequenceSpec,
    lambda: f64,
    k_max: u32,
) -> Result<Vec<ConvergenceRow>> {
    if lambda == 1.0 {
        return Err(AmoError::InvalidInput(
            "convergence experiments require λ ≠ 1".into(),
        ));
    }
    let limit = sequence.limit();
    let limits: Vec<f64> = (0..=k_max)
        .map(|k| limit_moment(&limit, lambda, k))
        .collect::<Result<_>>()?;
    let terms = sequence.terms();
    let per_term: Vec<Result<Vec<ConvergenceRow>>> = terms
        .par_iter()
        .map(|&(n, alpha)| {
            oracle_alpha(&alpha)?;
            let measure = SpectralMeasure::new(&alpha, lambda)?;
            Ok((0..=k_max)
                .map(|k| ConvergenceRow {
                    n,
                    alpha,
                    k,
                    value: measure.monomial(2 * k),
                    limit: limits[k as usize],
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_term {
        rows.extend(r?);
    }
    Ok(rows)
}
