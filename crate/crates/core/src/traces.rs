//! Trace formulas.
//!
//! * The two-traces formula writes `∫ φ dμ⁻` for rational `α` as
//!   `tr(Φ(H^per_{q,θ₊}) R_{θ₊}) − tr(Φ(H^anti_{q,0}) R_0)`.
//! * The four-traces formula writes the moment `c_{2k}` as a signed sum of
//!   anti-diagonal sums of `H^{2k+1}` over the phases `0, α/2, 1/2, (1+α)/2`,
//!   for any real `α`.
//! * The rational Fourier duality conjugates the periodic problem at `1/λ`
//!   into the antiperiodic problem at `λ`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::base::{potential, RationalFrequency};
use crate::error::{AmoError, Result};
use crate::spectral::{
    build_finite_operator, eigensystem, reflection_matrix, Boundary, FiniteOperator,
};

/// The two kinds of potential-preserving reflections of `ℤ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReflectionKind {
    /// `ψ_n ↦ ψ_{−n}`, used at the phases `0` and `1/2`.
    DiagCentered,
    /// `ψ_n ↦ ψ_{−1−n}`, used at the phases `α/2` and `(1+α)/2`.
    Offset,
}

impl ReflectionKind {
    /// The `s` in `ψ_n ↦ ψ_{s−n}`.
    pub fn shift(&self) -> i64 {
        match self {
            ReflectionKind::DiagCentered => 0,
            ReflectionKind::Offset => -1,
        }
    }
}

/// The four phases whose rotation orbits are symmetric under a reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistinguishedPhase {
    Zero,
    HalfAlpha,
    Half,
    HalfOnePlusAlpha,
}

impl DistinguishedPhase {
    pub const ALL: [DistinguishedPhase; 4] = [
        DistinguishedPhase::Zero,
        DistinguishedPhase::HalfAlpha,
        DistinguishedPhase::Half,
        DistinguishedPhase::HalfOnePlusAlpha,
    ];

    pub fn theta(&self, alpha: f64) -> f64 {
        match self {
            DistinguishedPhase::Zero => 0.0,
            DistinguishedPhase::HalfAlpha => alpha / 2.0,
            DistinguishedPhase::Half => 0.5,
            DistinguishedPhase::HalfOnePlusAlpha => (1.0 + alpha) / 2.0,
        }
    }

    pub fn reflection(&self) -> ReflectionKind {
        match self {
            DistinguishedPhase::Zero | DistinguishedPhase::Half => ReflectionKind::DiagCentered,
            _ => ReflectionKind::Offset,
        }
    }

    /// Sign of this phase's trace in the four-traces combination.
    pub fn sign(&self) -> f64 {
        match self {
            DistinguishedPhase::Zero => -1.0,
            _ => 1.0,
        }
    }
}

/// A window `[−W, W]` of a banded operator on `ℓ²(ℤ)`, stored by diagonals.
///
/// Products are truncated to the window, so an entry of a power `H^m` is
/// exact when every path of length `m` between its indices stays inside.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedWindow {
    radius: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedWindow {
    pub fn zeros(radius: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(2 * radius);
        BandedWindow {
            radius,
            bandwidth,
            data: vec![0.0; (2 * radius + 1) * (2 * bandwidth + 1)],
        }
    }

    /// The window of `H_{α,λ,θ}`: diagonal `2λ cos 2π(θ + nα)`, hopping 1.
    pub fn operator(alpha: f64, lambda: f64, theta: f64, radius: usize) -> Self {
        let mut w = BandedWindow::zeros(radius, 1);
        let r = radius as i64;
        for n in -r..=r {
            w.set(n, n, potential(lambda, theta + n as f64 * alpha));
            if n < r {
                w.set(n, n + 1, 1.0);
                w.set(n + 1, n, 1.0);
            }
        }
        w
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn slot(&self, i: i64, j: i64) -> Option<usize> {
        let r = self.radius as i64;
        let b = self.bandwidth as i64;
        if i.abs() > r || j.abs() > r || (j - i).abs() > b {
            return None;
        }
        Some(((i + r) * (2 * b + 1) + (j - i + b)) as usize)
    }

    pub fn get(&self, i: i64, j: i64) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    pub fn set(&mut self, i: i64, j: i64, v: f64) {
        let s = self.slot(i, j).expect("index inside window and band");
        self.data[s] = v;
    }

    /// Window-truncated product `self · rhs`.
    pub fn mul(&self, rhs: &BandedWindow) -> BandedWindow {
        assert_eq!(self.radius, rhs.radius, "windows must share a radius");
        let r = self.radius as i64;
        let (ba, bb) = (self.bandwidth as i64, rhs.bandwidth as i64);
        let mut out = BandedWindow::zeros(self.radius, (ba + bb) as usize);
        for i in -r..=r {
            for l in (i - ba).max(-r)..=(i + ba).min(r) {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in (l - bb).max(-r)..=(l + bb).min(r) {
                    let s = out.slot(i, j).expect("product band");
                    out.data[s] += a * rhs.get(l, j);
                }
            }
        }
        out
    }

    /// `self^m` by repeated multiplication.
    pub fn power(&self, m: usize) -> BandedWindow {
        let mut out = BandedWindow::zeros(self.radius, 0);
        let r = self.radius as i64;
        for i in -r..=r {
            out.set(i, i, 1.0);
        }
        for _ in 0..m {
            out = out.mul(self);
        }
        out
    }

    /// `Σ_i M_{i, s−i}`, the trace of `M R` for the reflection `ψ_n ↦ ψ_{s−n}`.
    pub fn anti_diagonal_sum(&self, kind: ReflectionKind) -> f64 {
        let r = self.radius as i64;
        let s = kind.shift();
        (-r..=r).map(|i| self.get(i, s - i)).sum()
    }

    /// Largest anti-diagonal entry `|M_{i,s−i}|` with `|i|` or `|s−i|` beyond
    /// `exact_radius`.
    pub fn anti_diagonal_outside(&self, kind: ReflectionKind, exact_radius: i64) -> f64 {
        let r = self.radius as i64;
        let s = kind.shift();
        (-r..=r)
            .filter(|&i| i.abs() > exact_radius || (s - i).abs() > exact_radius)
            .map(|i| self.get(i, s - i).abs())
            .fold(0.0, f64::max)
    }
}

/// `tr(H^m_{α,λ,θ} R_θ)` on a window of the given radius, for one of the
/// distinguished phases.
pub fn reflected_power_trace(
    alpha: f64,
    lambda: f64,
    phase: DistinguishedPhase,
    power: usize,
    radius: usize,
) -> Result<f64> {
    let h = BandedWindow::operator(alpha, lambda, phase.theta(alpha), radius);
    let hm = h.power(power);
    let kind = phase.reflection();
    let exact = radius as i64 - power as i64;
    if exact < 0 || hm.anti_diagonal_outside(kind, exact) != 0.0 {
        return Err(AmoError::WindowTooSmall { window: radius, power });
    }
    Ok(hm.anti_diagonal_sum(kind))
}

/// Default window radius `3k + 4` for the power `2k + 1`.
pub fn default_window(k: usize) -> usize {
    3 * k + 4
}

/// The four traces `tr(H^{2k+1}_θ R_θ)` for `θ = 0, α/2, 1/2, (1+α)/2`.
pub fn four_traces(alpha: f64, lambda: f64, k: usize, radius: usize) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (slot, phase) in out.iter_mut().zip(DistinguishedPhase::ALL) {
        *slot = reflected_power_trace(alpha, lambda, phase, 2 * k + 1, radius)?;
    }
    Ok(out)
}

/// `c_{2k}(α, λ)` from the four-traces formula on the default window.
pub fn moment_four_traces(alpha: f64, lambda: f64, k: usize) -> Result<f64> {
    moment_four_traces_with_window(alpha, lambda, k, default_window(k))
}

/// `c_{2k}(α, λ) = ±(tr_{(1+α)/2} + tr_{α/2} + tr_{1/2} − tr_0) / (2k+1)`,
/// negated for `λ > 1`.
pub fn moment_four_traces_with_window(
    alpha: f64,
    lambda: f64,
    k: usize,
    radius: usize,
) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AmoError::InvalidInput(format!("coupling must be ≥ 0, got {lambda}")));
    }
    let traces = four_traces(alpha, lambda, k, radius)?;
    let total: f64 = traces
        .iter()
        .zip(DistinguishedPhase::ALL)
        .map(|(t, p)| p.sign() * t)
        .sum();
    let value = total / (2 * k + 1) as f64;
    Ok(if lambda > 1.0 { -value } else { value })
}

/// Checks `tr_{1/2} = −tr_0` and `tr_{(1+α)/2} = tr_{α/2}` for the power
/// `2k + 1` to `1e−10` relative.
pub fn simplify_check(alpha: f64, lambda: f64, k: usize) -> bool {
    let Ok([t0, ta, th, tb]) = four_traces(alpha, lambda, k, default_window(k)) else {
        return false;
    };
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1.0);
    close(th, -t0) && close(tb, ta)
}

/// Relative defect of `tr H^{2k+1}_{α,λ,α/2} R_{α/2} = λ^{2k+1} tr H^{2k+1}_{α,1/λ,0} R_0`.
pub fn duality_bis_defect(alpha: f64, lambda: f64, k: usize) -> Result<f64> {
    let m = 2 * k + 1;
    let w = default_window(k);
    let lhs = reflected_power_trace(alpha, lambda, DistinguishedPhase::HalfAlpha, m, w)?;
    let rhs = lambda.powi(m as i32)
        * reflected_power_trace(alpha, 1.0 / lambda, DistinguishedPhase::Zero, m, w)?;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0))
}

/// Both evaluations of the two-traces formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTraces {
    /// `Σ_j (−1)^{j+1} (Φ(E^per_{j,θ₊}) − Φ(E^anti_{j,0}))`.
    pub alternating: f64,
    /// `tr(Φ(H^per_{q,θ₊}) R_{θ₊}) − tr(Φ(H^anti_{q,0}) R_0)` via eigenvectors.
    pub matrix_trace: f64,
}

/// `∫ φ dμ⁻` for `φ = Φ'` through the two-traces formula, with the overall
/// sign flipped for `λ > 1`.
///
/// The alternating eigenvalue sum and the matrix traces must agree to
/// `1e−7`; a larger gap means a parity was misassigned.
pub fn two_traces_integral(
    alpha: &RationalFrequency,
    lambda: f64,
    phi: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let both = two_traces(alpha, lambda, phi)?;
    let d = (both.alternating - both.matrix_trace).abs();
    if d > 1e-7 * both.alternating.abs().max(1.0) {
        return Err(AmoError::RouteDisagreement(format!(
            "two-traces routes differ by {d:.3e} for α = {alpha}, λ = {lambda}"
        )));
    }
    Ok(both.alternating)
}

/// Computes both routes of [`two_traces_integral`] without comparing them.
pub fn two_traces(
    alpha: &RationalFrequency,
    lambda: f64,
    phi: &dyn Fn(f64) -> f64,
) -> Result<TwoTraces> {
    let per_op = FiniteOperator::per_at_theta_plus(alpha, lambda);
    let anti_op = FiniteOperator::anti_at_zero(alpha, lambda);
    let per = eigensystem(&per_op)?;
    let anti = eigensystem(&anti_op)?;

    let mut alternating = 0.0;
    for (j, (&p, &a)) in per.values.iter().zip(&anti.values).enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        alternating += sign * (phi(p) - phi(a));
    }

    let reflected = |es: &crate::spectral::EigenSystem, op: &FiniteOperator| {
        let r = reflection_matrix(op.dim(), op.boundary(), op.reflection().expect("reflection"));
        es.values
            .iter()
            .enumerate()
            .map(|(j, &e)| {
                let v = es.vectors.column(j);
                phi(e) * (v.transpose() * &r * v)[(0, 0)]
            })
            .sum::<f64>()
    };
    let matrix_trace = reflected(&per, &per_op) - reflected(&anti, &anti_op);
    let sign = if lambda > 1.0 { -1.0 } else { 1.0 };
    Ok(TwoTraces {
        alternating: sign * alternating,
        matrix_trace: sign * matrix_trace,
    })
}

/// The `q × q` Fourier map `(F_q)_{n,j} = exp(2πi (jα + θ₊) n)` from
/// periodic to antiperiodic coordinates.
pub fn fourier_matrix(alpha: &RationalFrequency) -> DMatrix<Complex64> {
    let q = alpha.q() as usize;
    let (tn, td) = alpha.theta_plus_fraction();
    DMatrix::from_fn(q, q, |n, j| {
        // (jα + θ₊) n = (2 j p + tn) n / (2q), reduced exactly.
        let num = ((2 * j as u64 * alpha.p() + tn) * n as u64) % td;
        let angle = 2.0 * PI * num as f64 / td as f64;
        Complex64::new(angle.cos(), angle.sin())
    })
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Largest residual among the three Fourier commutation identities and the
/// two conjugations of the rational duality.
pub fn fourier_duality_check(alpha: &RationalFrequency, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(AmoError::InvalidInput(format!("coupling must be > 0, got {lambda}")));
    }
    let q = alpha.q() as usize;
    let f = fourier_matrix(alpha);
    let tp = alpha.theta_plus();
    let zero = crate::base::Phase::new(0.0);
    let per = Boundary::Periodic;
    let anti = Boundary::Antiperiodic;

    let r_plus = complexify(&reflection_matrix(q, per, ReflectionKind::Offset));
    let r_zero = complexify(&reflection_matrix(q, anti, ReflectionKind::DiagCentered));
    let laplace_per = complexify(build_finite_operator(alpha, 0.0, zero, per).matrix());
    let laplace_anti = complexify(build_finite_operator(alpha, 0.0, zero, anti).matrix());
    let diag = |theta: f64| {
        DMatrix::from_fn(q, q, |i, j| {
            if i == j {
                Complex64::new(potential(1.0, theta + i as f64 * alpha.value()), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };
    let d_zero = diag(0.0);
    let d_plus = diag(tp.value());

    let h = |l: f64, th: crate::base::Phase, b: Boundary| {
        complexify(build_finite_operator(alpha, l, th, b).matrix())
    };
    let per_dual = h(1.0 / lambda, tp, per) * Complex64::new(lambda, 0.0);
    let anti_at = h(lambda, zero, anti);
    let anti_dual = h(1.0 / lambda, zero, anti) * Complex64::new(lambda, 0.0);
    let per_at = h(lambda, tp, per);

    let residuals = [
        (&f * &r_plus - &r_zero * &f).norm(),
        (&f * &laplace_per - &d_zero * &f).norm(),
        (&f * &d_plus - &laplace_anti * &f).norm(),
        (&f * &per_dual - &anti_at * &f).norm(),
        (&anti_dual * &f - &f * &per_at).norm(),
    ];
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// `(Φ(H^per_{q,θ}))_{j,l} = Σ_m (±1)^m Φ(H_θ)_{j+mq, l}` evaluated from an
/// infinite-operator window, for `0 ≤ j, l < q`.
///
/// `entry(i, l)` returns `Φ(H_θ)_{i,l}`; `reach` bounds `|i − l|` beyond
/// which the entries are negligible or zero.
pub fn fold_window(
    q: usize,
    boundary: Boundary,
    reach: i64,
    entry: impl Fn(i64, i64) -> f64,
) -> DMatrix<f64> {
    let qi = q as i64;
    let mut out = DMatrix::<f64>::zeros(q, q);
    for j in 0..qi {
        for l in 0..qi {
            let mut acc = 0.0;
            let lo = (-(reach + qi)) / qi - 1;
            let hi = (reach + qi) / qi + 1;
            for m in lo..=hi {
                let i = j + m * qi;
                if (i - l).abs() > reach {
                    continue;
                }
                let sign = if m.rem_euclid(2) == 0 { 1.0 } else { boundary.sign() };
                acc += sign * entry(i, l);
            }
            out[(j as usize, l as usize)] = acc;
        }
    }
    out
}

/// Largest deviation between the folded window power `H^m` and the dense
/// power of `H^per_{q,θ}` or `H^anti_{q,θ}`.
pub fn projection_defect(
    alpha: &RationalFrequency,
    lambda: f64,
    theta: f64,
    boundary: Boundary,
    power: usize,
) -> f64 {
    let q = alpha.q() as usize;
    let radius = power + 2 * q + 2;
    let window = BandedWindow::operator(alpha.value(), lambda, theta, radius).power(power);
    let folded = fold_window(q, boundary, power as i64, |i, l| window.get(i, l));
    let op = build_finite_operator(alpha, lambda, crate::base::Phase::new(theta), boundary);
    let mut dense = DMatrix::<f64>::identity(q, q);
    for _ in 0..power {
        dense = &dense * op.matrix();
    }
    (&folded - &dense).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rf(p: i64, q: i64) -> RationalFrequency {
        RationalFrequency::new(p, q).unwrap()
    }

    #[test]
    fn banded_power_matches_dense() {
        let h = BandedWindow::operator(0.3, 0.7, 0.1, 10);
        let h3 = h.power(3);
        let n = 21;
        let dense = DMatrix::from_fn(n, n, |i, j| h.get(i as i64 - 10, j as i64 - 10));
        let d3 = &dense * &dense * &dense;
        for i in 0..n {
            for j in 0..n {
                assert!((d3[(i, j)] - h3.get(i as i64 - 10, j as i64 - 10)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cubic_traces_match_closed_forms() {
        for &(a, l) in &[(0.0, 1.0), (0.3, 0.6), (0.618, 1.7)] {
            let t = (2.0 * PI * a).cos();
            let t0 = reflected_power_trace(a, l, DistinguishedPhase::Zero, 3, 7).unwrap();
            assert!((t0 - (8.0 * l * l * l + 12.0 * l * (1.0 + t))).abs() < 1e-12);
            let ta = reflected_power_trace(a, l, DistinguishedPhase::HalfAlpha, 3, 7).unwrap();
            assert!((ta - (8.0 + 12.0 * l * l * (1.0 + t))).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroth_moment_is_measure() {
        for &a in &[0.0, 0.2, 0.5, 0.618] {
            assert!((moment_four_traces(a, 0.25, 0).unwrap() - 3.0).abs() < 1e-13);
            assert!((moment_four_traces(a, 1.5, 0).unwrap() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn window_saturation() {
        for k in 0..5 {
            let a = moment_four_traces_with_window(0.37, 0.6, k, 3 * k + 4).unwrap();
            let b = moment_four_traces_with_window(0.37, 0.6, k, 3 * k + 8).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn small_window_is_refused() {
        assert!(matches!(
            moment_four_traces_with_window(0.3, 0.5, 3, 4),
            Err(AmoError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn simplifying_identities() {
        assert!(simplify_check(1.0 / 3.0, 0.7, 2));
        assert!(simplify_check(0.6180339887, 0.4, 1));
        assert!(simplify_check(0.25, 0.0, 3));
    }

    #[test]
    fn two_traces_examples() {
        let v = two_traces_integral(&rf(1, 3), 0.5, &|e| e).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let c2 = two_traces_integral(&rf(1, 2), 0.5, &|e| e * e * e / 3.0).unwrap();
        assert!((c2 - 14.0 / 3.0).abs() < 1e-12);
        let c = two_traces_integral(&rf(2, 7), 0.5, &|_| 1.0).unwrap();
        assert!(c.abs() < 1e-14);
    }

    #[test]
    fn fourier_identities() {
        assert!(fourier_duality_check(&rf(1, 3), 0.5).unwrap() < 1e-10);
        assert!(fourier_duality_check(&rf(2, 5), 2.0).unwrap() < 1e-10);
        assert!(fourier_duality_check(&rf(0, 1), 0.7).unwrap() < 1e-14);
    }

    #[test]
    fn projection_of_powers() {
        for a in RationalFrequency::enumerate(6) {
            for b in [Boundary::Periodic, Boundary::Antiperiodic] {
                for m in [1, 2, 5] {
                    assert!(projection_defect(&a, 0.8, 0.21, b, m) < 1e-9, "{a} {b:?} {m}");
                }
            }
        }
    }

    #[test]
    fn duality_bis_sign() {
        for k in 0..4 {
            assert!(duality_bis_defect(0.3, 0.5, k).unwrap() < 1e-12);
        }
    }
}
