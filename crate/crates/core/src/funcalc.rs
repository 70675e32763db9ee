//! Resolvents and the holomorphic functional calculus.
//!
//! `G(z) = (H − z)⁻¹` is computed on a window `[−W, W]` with zero boundary by
//! a complex tridiagonal solve. `Φ(H)` is the Cauchy integral
//! `(1/2πi) ∮ Φ(z) (−G(z)) dz` over a contour enclosing `[−2−2λ, 2+2λ]`,
//! evaluated node by node in parallel. The four-traces formula then gives
//! `∫ φ dμ⁻` for analytic `Φ` with `Φ' = φ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::base::{potential, Frequency, RationalFrequency};
use crate::error::{AmoError, Result};
use crate::spectral::{build_finite_operator, spectrum_union, Boundary};
use crate::traces::{fold_window, DistinguishedPhase};

/// Smallest admissible distance between a spectral parameter and `Σ⁺`.
pub const MIN_DISTANCE: f64 = 1e-3;
/// Largest window radius tried before giving up.
pub const MAX_WINDOW: usize = 512;
/// Change between successive quadrature refinements that counts as converged.
pub const QUADRATURE_TOLERANCE: f64 = 1e-7;
/// Largest node count tried by the quadrature refinement.
pub const MAX_NODES: usize = 4096;
/// Longest continued fraction used to close a window.
const HALF_LINE_MAX: i64 = 1 << 16;
const RESIDUAL_TOLERANCE: f64 = 1e-9;
const TRUNCATION_TOLERANCE: f64 = 1e-12;

/// Shape of an integration contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourShape {
    Circle { center: Complex64, radius: f64 },
    /// Axis-parallel rectangle with opposite corners `lo` and `hi`.
    Rectangle { lo: Complex64, hi: Complex64 },
}

/// Quadrature rule attached to a contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Periodic trapezoid rule, used on circles.
    Trapezoidal,
    /// Gauss–Legendre on each side, used on rectangles.
    GaussLegendre,
}

/// A positively oriented closed contour with its node count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub shape: ContourShape,
    pub nodes: usize,
    pub rule: QuadratureRule,
}

impl ContourSpec {
    /// Default circle about `0` of radius `3 + 2λ` with 256 nodes.
    pub fn default_for(lambda: f64) -> Self {
        ContourSpec::circle(Complex64::new(0.0, 0.0), 3.0 + 2.0 * lambda, 256)
    }

    pub fn circle(center: Complex64, radius: f64, nodes: usize) -> Self {
        ContourSpec {
            shape: ContourShape::Circle { center, radius },
            nodes,
            rule: QuadratureRule::Trapezoidal,
        }
    }

    pub fn rectangle(lo: Complex64, hi: Complex64, nodes: usize) -> Self {
        ContourSpec {
            shape: ContourShape::Rectangle { lo, hi },
            nodes,
            rule: QuadratureRule::GaussLegendre,
        }
    }

    /// Rectangle with a margin of `margin` around `[−2−2λ, 2+2λ]`.
    pub fn rectangle_for(lambda: f64, margin: f64, nodes: usize) -> Self {
        let a = 2.0 + 2.0 * lambda + margin;
        ContourSpec::rectangle(Complex64::new(-a, -margin), Complex64::new(a, margin), nodes)
    }

    fn with_nodes(&self, nodes: usize) -> Self {
        ContourSpec { nodes, ..*self }
    }

    /// Checks `M ≥ 64` and that the contour encloses `[−2−2λ, 2+2λ]`.
    pub fn validate(&self, lambda: f64) -> Result<()> {
        if self.nodes < 64 {
            return Err(AmoError::InvalidInput(format!(
                "contour needs at least 64 nodes, got {}",
                self.nodes
            )));
        }
        let edge = 2.0 + 2.0 * lambda;
        let encloses = match self.shape {
            ContourShape::Circle { center, radius } => {
                radius.is_finite()
                    && (center - Complex64::new(-edge, 0.0)).norm() < radius
                    && (center - Complex64::new(edge, 0.0)).norm() < radius
            }
            ContourShape::Rectangle { lo, hi } => {
                lo.re < -edge && hi.re > edge && lo.im < 0.0 && hi.im > 0.0
            }
        };
        if !encloses {
            return Err(AmoError::InvalidInput(format!(
                "contour {:?} does not enclose [{}, {}]",
                self.shape, -edge, edge
            )));
        }
        Ok(())
    }

    /// Length of the contour.
    pub fn length(&self) -> f64 {
        match self.shape {
            ContourShape::Circle { radius, .. } => 2.0 * PI * radius,
            ContourShape::Rectangle { lo, hi } => 2.0 * ((hi.re - lo.re) + (hi.im - lo.im)),
        }
    }

    /// Nodes `z_j` and weights `w_j` with `∮ f dz ≈ Σ w_j f(z_j)`.
    pub fn quadrature(&self) -> Vec<(Complex64, Complex64)> {
        match self.shape {
            ContourShape::Circle { center, radius } => {
                let m = self.nodes;
                (0..m)
                    .map(|j| {
                        let phase = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
                        let z = center + radius * phase;
                        let w = Complex64::new(0.0, 2.0 * PI * radius / m as f64) * phase;
                        (z, w)
                    })
                    .collect()
            }
            ContourShape::Rectangle { lo, hi } => {
                let per_side = self.nodes.div_ceil(4);
                let (x, w) = gauss_legendre(per_side);
                let corners = [
                    lo,
                    Complex64::new(hi.re, lo.im),
                    hi,
                    Complex64::new(lo.re, hi.im),
                ];
                let mut out = Vec::with_capacity(4 * per_side);
                for side in 0..4 {
                    let a = corners[side];
                    let b = corners[(side + 1) % 4];
                    let half = (b - a) / 2.0;
                    let mid = (a + b) / 2.0;
                    for (xi, wi) in x.iter().zip(&w) {
                        out.push((mid + half * *xi, half * *wi));
                    }
                }
                out
            }
        }
    }

    /// Smallest distance from a node to `[−2−2λ, 2+2λ]`.
    pub fn clearance(&self, lambda: f64) -> f64 {
        self.quadrature()
            .iter()
            .map(|(z, _)| interval_distance(*z, lambda))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, by Newton iteration on
/// `P_n` from the Chebyshev initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    (x, w)
}

/// Distance from `z` to `[−2−2λ, 2+2λ]`.
fn interval_distance(z: Complex64, lambda: f64) -> f64 {
    let edge = 2.0 + 2.0 * lambda;
    let dx = (z.re.abs() - edge).max(0.0);
    dx.hypot(z.im)
}

/// A lower bound for `dist(z, Σ⁺)`: exact for rational `α`, and the distance
/// to `[−2−2λ, 2+2λ] ⊇ Σ⁺` otherwise, which is at least `|Im z|`.
pub fn spectral_distance(alpha: &Frequency, lambda: f64, z: Complex64) -> Result<f64> {
    match alpha {
        Frequency::Rational(r) => {
            let sigma = spectrum_union(r, lambda)?;
            Ok(sigma.distance(z.re).hypot(z.im))
        }
        Frequency::Real(_) => Ok(interval_distance(z, lambda)),
    }
}

/// `H − z` on `[−W, W]` with zero boundary, LU-factored once for repeated
/// solves.
struct ShiftedWindow {
    radius: usize,
    diag: Vec<Complex64>,
    /// LU factors with partial pivoting: multipliers, the diagonal of `U`,
    /// its first and second superdiagonals, and whether row `i` was swapped
    /// with row `i + 1`.
    lower: Vec<Complex64>,
    upper: Vec<Complex64>,
    super1: Vec<Complex64>,
    super2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl ShiftedWindow {
    fn new(alpha: f64, lambda: f64, theta: f64, radius: usize, z: Complex64) -> Self {
        let r = radius as i64;
        let diag: Vec<Complex64> = (-r..=r)
            .map(|n| Complex64::new(potential(lambda, theta + n as f64 * alpha), 0.0) - z)
            .collect();
        let n = diag.len();
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        // The exterior half-lines enter through their Schur complements, so
        // the window block is that of the infinite operator. A plain
        // truncation has boundary states that can sit inside a gap.
        let mut closed = diag.clone();
        closed[0] -= half_line_m(alpha, lambda, theta, z, -r - 1, -1);
        closed[n - 1] -= half_line_m(alpha, lambda, theta, z, r + 1, 1);
        // H − z is indefinite for real z in a gap, so the factorisation
        // pivots.
        let mut lower = vec![one; n.saturating_sub(1)];
        let mut upper = closed;
        let mut super1 = vec![one; n.saturating_sub(1)];
        let mut super2 = vec![zero; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if upper[i].norm() >= lower[i].norm() {
                let fact = lower[i] / upper[i];
                lower[i] = fact;
                upper[i + 1] -= fact * super1[i];
            } else {
                let fact = upper[i] / lower[i];
                upper[i] = lower[i];
                lower[i] = fact;
                let next = upper[i + 1];
                upper[i + 1] = super1[i] - fact * next;
                super1[i] = next;
                if i + 2 < n {
                    super2[i] = super1[i + 1];
                    super1[i + 1] = -fact * super1[i + 1];
                }
                swapped[i] = true;
            }
        }
        ShiftedWindow {
            radius,
            diag,
            lower,
            upper,
            super1,
            super2,
            swapped,
        }
    }

    fn size(&self) -> usize {
        self.diag.len()
    }
}

/// `[(H_± − z)⁻¹]_{start,start}` for the half-line `H_±` that begins at
/// `start` and extends in direction `step`, from the continued fraction
/// `m_k = 1 / (V_k − z − m_{k+step})` run backward from a distant cut.
/// The cut is pushed out until two successive values agree.
fn half_line_m(alpha: f64, lambda: f64, theta: f64, z: Complex64, start: i64, step: i64) -> Complex64 {
    let fraction = |len: i64| {
        let mut m = Complex64::new(0.0, 0.0);
        for j in (0..=len).rev() {
            let k = start + step * j;
            let mut den = Complex64::new(potential(lambda, theta + k as f64 * alpha), 0.0) - z - m;
            // An exactly vanishing denominator is replaced by a tiny one, as
            // in Lentz's method; the next step then sends `m` back to ≈ 0.
            // Complex division squares the modulus, hence 1e−150.
            if den == Complex64::new(0.0, 0.0) {
                den = Complex64::new(1e-150, 0.0);
            }
            m = 1.0 / den;
        }
        m
    };
    let mut len = 64;
    let mut prev = fraction(len);
    while len < HALF_LINE_MAX {
        len *= 2;
        let next = fraction(len);
        if (next - prev).norm() <= 1e-15 * next.norm().max(1e-300) {
            return next;
        }
        prev = next;
    }
    prev
}

impl ShiftedWindow {
    /// Column `col` of `(H − z)⁻¹`, indexed from `−W`.
    fn column(&self, col: i64) -> Vec<Complex64> {
        let n = self.size();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[(col + self.radius as i64) as usize] = Complex64::new(1.0, 0.0);
        for i in 0..n - 1 {
            if self.swapped[i] {
                let t = x[i];
                x[i] = x[i + 1];
                x[i + 1] = t - self.lower[i] * x[i];
            } else {
                let t = x[i];
                x[i + 1] -= self.lower[i] * t;
            }
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= self.super1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= self.super2[i] * x[i + 2];
            }
            x[i] = v / self.upper[i];
        }
        x
    }

    /// `max_i |((H − z) x − e_col)_i|` over `|i| ≤ inner`.
    fn residual(&self, x: &[Complex64], col: i64, inner: i64) -> f64 {
        let r = self.radius as i64;
        let n = self.size();
        (-inner..=inner)
            .map(|i| {
                let k = (i + r) as usize;
                let mut v = self.diag[k] * x[k];
                if k > 0 {
                    v += x[k - 1];
                }
                if k + 1 < n {
                    v += x[k + 1];
                }
                if i == col {
                    v -= 1.0;
                }
                v.norm()
            })
            .fold(0.0, nan_max)
    }
}

/// Exponential decay fit `|G_{j,0}| ≈ C₁ e^{−c₁|j|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Fitted rate `c₁`.
    pub rate: f64,
    /// Envelope constant `C₁ = max_j |G_{j,0}| e^{c₁|j|}` over the fitted range.
    pub constant: f64,
}

/// Least-squares fit of the logarithm of the envelope
/// `e_d = max_{|j| ≥ d} |g_j|` against `d` over `2 ≤ d ≤ W/2`, stopping
/// where the envelope drops below `1e−12` of its peak.
///
/// The envelope is used instead of `|g_j|` itself because columns can have
/// isolated near-zeros (for periodic potentials whole residue classes
/// vanish), which would bias a pointwise fit.
fn fit_decay(column: &[Complex64], radius: usize) -> DecayFit {
    let r = radius as i64;
    let hi = (r / 2).max(2);
    let at = |j: i64| column[(j + r) as usize].norm();
    let mut envelope = vec![0.0f64; (hi + 1) as usize];
    let mut running: f64 = 0.0;
    for d in (0..=hi).rev() {
        running = running.max(at(d)).max(at(-d));
        envelope[d as usize] = running;
    }
    // Entries below the rounding floor of the solve carry no decay signal.
    let floor = 1e-12 * envelope[0];
    let last = (3..=hi).take_while(|&d| envelope[d as usize] > floor).last().unwrap_or(3);
    let pts: Vec<(f64, f64)> = (2..=last)
        .map(|d| (d as f64, envelope[d as usize].max(1e-300).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let rate = -sxy / sxx;
    let constant = (-hi..=hi)
        .map(|j| column[(j + r) as usize].norm() * (rate * j.abs() as f64).exp())
        .fold(0.0, f64::max);
    DecayFit { rate, constant }
}

/// `G(z)` on `[−W, W]` with its decay fit.
#[derive(Debug, Clone)]
pub struct ResolventWindow {
    radius: usize,
    z: Complex64,
    entries: DMatrix<Complex64>,
    decay: DecayFit,
    residual: f64,
}

impl ResolventWindow {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn decay(&self) -> DecayFit {
        self.decay
    }

    /// Largest inner-window residual of `(H − z) G − Id`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `G_{i,j}` for `|i|, |j| ≤ W`.
    pub fn get(&self, i: i64, j: i64) -> Complex64 {
        let r = self.radius as i64;
        self.entries[((i + r) as usize, (j + r) as usize)]
    }

    /// Spectral norm of the window matrix.
    pub fn norm(&self) -> f64 {
        self.entries.clone().svd(false, false).singular_values.max()
    }
}

/// `G_{α,λ,θ}(z)` on `[−W, W]`.
///
/// Refuses `z` closer than `1e−3` to `Σ⁺`, and fails if the inner-window
/// residual on `|i|, |j| ≤ W − 2` exceeds `1e−9`.
pub fn resolvent(
    alpha: &Frequency,
    lambda: f64,
    theta: f64,
    z: Complex64,
    radius: usize,
) -> Result<ResolventWindow> {
    check_coupling(lambda)?;
    if radius < 4 {
        return Err(AmoError::InvalidInput(format!("window radius {radius} is below 4")));
    }
    let distance = spectral_distance(alpha, lambda, z)?;
    if distance < MIN_DISTANCE {
        return Err(AmoError::TooCloseToSpectrum {
            distance,
            minimum: MIN_DISTANCE,
        });
    }
    let window = ShiftedWindow::new(alpha.value(), lambda, theta, radius, z);
    let n = window.size();
    let r = radius as i64;
    let inner = r - 2;
    let columns: Vec<(Vec<Complex64>, f64)> = (-r..=r)
        .into_par_iter()
        .map(|col| {
            let x = window.column(col);
            let res = window.residual(&x, col, inner);
            (x, res)
        })
        .collect();
    let mut entries = DMatrix::<Complex64>::zeros(n, n);
    let mut residual: f64 = 0.0;
    for (k, (x, res)) in columns.into_iter().enumerate() {
        if (k as i64 - r).abs() <= inner {
            residual = nan_max(residual, res);
        }
        for (i, v) in x.into_iter().enumerate() {
            entries[(i, k)] = v;
        }
    }
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(AmoError::ResidualFailure {
            residual,
            window: radius,
        });
    }
    let col0: Vec<Complex64> = entries.column(radius).iter().copied().collect();
    let decay = fit_decay(&col0, radius);
    Ok(ResolventWindow {
        radius,
        z,
        entries,
        decay,
        residual,
    })
}

/// `max` that propagates NaN, so that failed solves cannot pass a tolerance.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn check_coupling(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AmoError::InvalidInput(format!("coupling must be ≥ 0, got {lambda}")));
    }
    Ok(())
}

type ComplexFn = dyn Fn(Complex64) -> Complex64 + Send + Sync;
type RealFn = dyn Fn(f64) -> f64 + Send + Sync;

/// An entire function `Φ` sampled at complex points, together with its
/// derivative `φ = Φ'` on the real line.
pub struct AnalyticFunction {
    name: String,
    value: Box<ComplexFn>,
    derivative: Box<RealFn>,
}

impl std::fmt::Debug for AnalyticFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticFunction").field("name", &self.name).finish()
    }
}

impl AnalyticFunction {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AnalyticFunction {
            name: name.into(),
            value: Box::new(value),
            derivative: Box::new(derivative),
        }
    }

    /// `Φ(E) = E^m`.
    pub fn power(m: u32) -> Self {
        AnalyticFunction::new(
            format!("E^{m}"),
            move |z| z.powu(m),
            move |x| if m == 0 { 0.0 } else { m as f64 * x.powi(m as i32 - 1) },
        )
    }

    /// `Φ(E) = E^{2k+1}/(2k+1)`, whose derivative is the moment density `E^{2k}`.
    pub fn moment_antiderivative(k: u32) -> Self {
        let d = 2 * k + 1;
        AnalyticFunction::new(
            format!("E^{d}/{d}"),
            move |z| z.powu(d) / d as f64,
            move |x| x.powi(2 * k as i32),
        )
    }

    pub fn exp() -> Self {
        AnalyticFunction::new("exp", |z| z.exp(), |x| x.exp())
    }

    pub fn sin() -> Self {
        AnalyticFunction::new("sin", |z| z.sin(), |x| x.cos())
    }

    pub fn cos() -> Self {
        AnalyticFunction::new("cos", |z| z.cos(), |x| -x.sin())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.value)(z)
    }

    /// `Φ` on the real line.
    pub fn eval_real(&self, x: f64) -> f64 {
        (self.value)(Complex64::new(x, 0.0)).re
    }

    /// `φ = Φ'` on the real line.
    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }
}

/// Entries of `Φ(H)` requested by `(row, column)`, together with the decay
/// data gathered on the contour.
struct ContourEntries {
    values: Vec<Complex64>,
    /// Per node, `|Φ(z) w| / 2π` with the decay fit of `G(z)` there.
    node_decay: Vec<(f64, DecayFit)>,
    /// Largest boundary entry `|G_{±W, col}|` over the nodes and columns.
    boundary: f64,
}

/// One quadrature pass of `(1/2πi) ∮ Φ(z)(−G(z)) dz` for the given entries.
fn contour_pass(
    alpha: f64,
    lambda: f64,
    theta: f64,
    phi: &AnalyticFunction,
    contour: &ContourSpec,
    radius: usize,
    entries: &[(i64, i64)],
) -> ContourEntries {
    let mut columns: Vec<i64> = entries.iter().map(|e| e.1).collect();
    columns.push(0);
    columns.sort_unstable();
    columns.dedup();
    let r = radius as i64;
    let nodes = contour.quadrature();
    let per_node: Vec<(Vec<Complex64>, (f64, DecayFit), f64)> = nodes
        .par_iter()
        .map(|&(z, w)| {
            let window = ShiftedWindow::new(alpha, lambda, theta, radius, z);
            let solved: Vec<Vec<Complex64>> = columns.iter().map(|&c| window.column(c)).collect();
            let lookup = |col: i64| {
                let k = columns.binary_search(&col).expect("column was solved");
                &solved[k]
            };
            // −Φ(z) w / (2πi)
            let factor = -phi.eval(z) * w / Complex64::new(0.0, 2.0 * PI);
            let weight = factor.norm();
            let vals = entries
                .iter()
                .map(|&(i, j)| factor * lookup(j)[(i + r) as usize])
                .collect();
            let decay = fit_decay(lookup(0), radius);
            let boundary = solved
                .iter()
                .map(|x| nan_max(x[0].norm(), x[x.len() - 1].norm()))
                .fold(0.0, nan_max);
            (vals, (weight, decay), boundary)
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); entries.len()];
    let mut node_decay = Vec::with_capacity(per_node.len());
    let mut boundary: f64 = 0.0;
    for (vals, decay, b) in per_node {
        for (acc, v) in values.iter_mut().zip(vals) {
            *acc += v;
        }
        node_decay.push(decay);
        boundary = nan_max(boundary, b);
    }
    ContourEntries {
        values,
        node_decay,
        boundary,
    }
}

/// Contour integration with window and node refinement.
///
/// The window starts at `max(64, 2·reach)` and doubles until the boundary
/// entries of the solved resolvent columns fall below `1e−12`. The windows
/// are closed by their exterior continued fractions, so this guards the
/// closure itself and bounds what a plain truncation would have lost. The node count doubles until successive
/// passes agree to `1e−7`.
fn contour_entries(
    alpha: f64,
    lambda: f64,
    theta: f64,
    phi: &AnalyticFunction,
    contour: &ContourSpec,
    entries: &[(i64, i64)],
) -> Result<(ContourEntries, usize)> {
    check_coupling(lambda)?;
    contour.validate(lambda)?;
    let clearance = contour.clearance(lambda);
    let reach = entries
        .iter()
        .map(|&(i, j)| i.abs().max(j.abs()))
        .max()
        .unwrap_or(0) as usize;
    let mut radius = 64usize.max((2 * reach).next_power_of_two());
    loop {
        if radius > MAX_WINDOW {
            return Err(AmoError::ResidualFailure {
                residual: f64::NAN,
                window: radius / 2,
            });
        }
        let mut spec = *contour;
        let mut prev = contour_pass(alpha, lambda, theta, phi, &spec, radius, entries);
        if !(prev.boundary / clearance <= TRUNCATION_TOLERANCE) {
            log::debug!(
                "window {radius}: boundary entry {:.3e}, doubling",
                prev.boundary
            );
            radius *= 2;
            continue;
        }
        loop {
            let next_nodes = spec.nodes * 2;
            if next_nodes > MAX_NODES {
                let change = f64::NAN;
                return Err(AmoError::QuadratureNonConvergence { change });
            }
            spec = spec.with_nodes(next_nodes);
            let next = contour_pass(alpha, lambda, theta, phi, &spec, radius, entries);
            let change = prev
                .values
                .iter()
                .zip(&next.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, nan_max);
            if change <= QUADRATURE_TOLERANCE {
                return Ok((next, radius));
            }
            log::debug!("{} nodes: change {change:.3e}, doubling", spec.nodes);
            prev = next;
        }
    }
}

/// `Φ(H_{α,λ,θ})` on an inner window `[−R, R]`.
#[derive(Debug, Clone)]
pub struct FunctionWindow {
    radius: usize,
    entries: DMatrix<Complex64>,
}

impl FunctionWindow {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn get(&self, i: i64, j: i64) -> Complex64 {
        let r = self.radius as i64;
        self.entries[((i + r) as usize, (j + r) as usize)]
    }

    /// Largest `|Im Φ(H)_{i,j}|`.
    pub fn max_imaginary(&self) -> f64 {
        self.entries.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Real parts as a dense matrix indexed from `−R`.
    pub fn real(&self) -> DMatrix<f64> {
        self.entries.map(|z| z.re)
    }
}

/// `Φ(H_{α,λ,θ})` on `[−R, R]` by the Cauchy integral over `contour`.
pub fn function_of_operator(
    alpha: f64,
    lambda: f64,
    theta: f64,
    phi: &AnalyticFunction,
    contour: &ContourSpec,
    inner_radius: usize,
) -> Result<FunctionWindow> {
    let r = inner_radius as i64;
    let entries: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|j| (-r..=r).map(move |i| (i, j)))
        .collect();
    let (found, _) = contour_entries(alpha, lambda, theta, phi, contour, &entries)?;
    let n = 2 * inner_radius + 1;
    let entries = DMatrix::from_iterator(n, n, found.values);
    Ok(FunctionWindow {
        radius: inner_radius,
        entries,
    })
}

/// Largest deviation between the folded `Φ(H_θ)` and `Φ(H^{per/anti}_{q,θ})`
/// computed by eigendecomposition.
pub fn folded_function_defect(
    alpha: &RationalFrequency,
    lambda: f64,
    theta: f64,
    boundary: Boundary,
    phi: &AnalyticFunction,
    contour: &ContourSpec,
    reach: usize,
) -> Result<f64> {
    let q = alpha.q() as usize;
    let window = function_of_operator(alpha.value(), lambda, theta, phi, contour, reach + q)?;
    let folded = fold_window(q, boundary, reach as i64, |i, l| window.get(i, l).re);
    let op = build_finite_operator(alpha, lambda, crate::base::Phase::new(theta), boundary);
    let eig = SymmetricEigen::new(op.matrix().clone());
    let f = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| phi.eval_real(e)));
    let dense = &eig.eigenvectors * f * eig.eigenvectors.transpose();
    Ok((&folded - &dense).amax())
}

/// Report of a four-traces evaluation for analytic `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourTracesReport {
    /// `∫ φ dμ⁻`.
    pub value: f64,
    /// The traces `tr(Φ(H_θ) R_θ)` for `θ = 0, α/2, 1/2, (1+α)/2`.
    pub traces: [f64; 4],
    /// Number of anti-diagonal terms kept on each side of the centre.
    pub terms: usize,
    /// Exponential tail bound from the fitted decay constants.
    pub tail_bound: f64,
    /// Smallest fitted decay rate over all contour nodes.
    pub decay_rate: f64,
}

/// Bound on `Σ_{|2i−s| ≥ reach} |(1/2πi) w Φ(z) G_{i,s−i}(z)|` at one node
/// from its fit `C₁ e^{−c₁|j|}`. Each node keeps its own `(c₁, C₁)` pair,
/// because mixing the smallest rate of one node with the largest constant of
/// another is not a bound anywhere.
fn node_tail(weight: f64, fit: DecayFit, reach: f64) -> f64 {
    if !(fit.rate > 0.0) {
        return f64::INFINITY;
    }
    let log = weight.ln() + fit.constant.ln() - fit.rate * reach;
    2.0 * log.exp() / (1.0 - (-2.0 * fit.rate).exp())
}

/// `∫ φ dμ⁻_{α,λ}` for `φ = Φ'` with `Φ` analytic, from the signed sum of
/// the four reflected traces `tr(Φ(H_θ) R_θ)`, negated for `λ > 1`.
///
/// Each anti-diagonal series is truncated once its exponential tail bound,
/// built from the fitted `c₁` and `C₁`, and its last kept term are below
/// `tol·1e−2`.
pub fn four_traces_analytic(
    alpha: f64,
    lambda: f64,
    phi: &AnalyticFunction,
    contour: &ContourSpec,
    tol: f64,
) -> Result<FourTracesReport> {
    check_coupling(lambda)?;
    if lambda == 1.0 {
        return Err(AmoError::InvalidInput(
            "the four-traces formula requires λ ≠ 1".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(AmoError::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let target = tol * 1e-2;
    let mut terms = 8usize;
    loop {
        if 2 * terms + 2 > MAX_WINDOW {
            return Err(AmoError::TailBoundNotAchieved {
                tail: f64::NAN,
                window: MAX_WINDOW,
            });
        }
        let mut traces = [0.0; 4];
        let mut worst_tail: f64 = 0.0;
        let mut last_term: f64 = 0.0;
        let mut min_rate = f64::INFINITY;
        for (slot, phase) in traces.iter_mut().zip(DistinguishedPhase::ALL) {
            let s = phase.reflection().shift();
            let l = terms as i64;
            let entries: Vec<(i64, i64)> = (-l..=l).map(|i| (i, s - i)).collect();
            let (found, _) =
                contour_entries(alpha, lambda, phase.theta(alpha), phi, contour, &entries)?;
            *slot = found.values.iter().map(|z| z.re).sum();
            last_term = last_term
                .max(found.values[0].norm())
                .max(found.values[found.values.len() - 1].norm());
            let reach = (2 * terms + 1) as f64;
            let tail: f64 = found
                .node_decay
                .iter()
                .map(|&(weight, fit)| {
                    min_rate = min_rate.min(fit.rate);
                    node_tail(weight, fit, reach)
                })
                .sum();
            worst_tail = worst_tail.max(tail);
        }
        if worst_tail < target && last_term < target {
            let total: f64 = traces
                .iter()
                .zip(DistinguishedPhase::ALL)
                .map(|(t, p)| p.sign() * t)
                .sum();
            let value = if lambda > 1.0 { -total } else { total };
            return Ok(FourTracesReport {
                value,
                traces,
                terms,
                tail_bound: worst_tail,
                decay_rate: min_rate,
            });
        }
        log::debug!("{terms} terms: tail {worst_tail:.3e}, last {last_term:.3e}, doubling");
        terms *= 2;
        if 2 * terms + 2 > MAX_WINDOW {
            return Err(AmoError::TailBoundNotAchieved {
                tail: worst_tail,
                window: MAX_WINDOW,
            });
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::BandedWindow;

    fn real(x: f64) -> Frequency {
        Frequency::Real(x)
    }

    #[test]
    fn resolvent_in_a_real_gap() {
        // V = 1, −1/2, −1/2, … and z = ±1 make some continued-fraction
        // denominators vanish exactly.
        let alpha = Frequency::Rational(RationalFrequency::new(1, 3).unwrap());
        for x in [-1.0, 1.0] {
            let g = resolvent(&alpha, 0.5, 0.0, Complex64::new(x, 0.0), 128).unwrap();
            assert!(g.residual() <= 1e-12);
            assert!(g.decay().rate > 0.1, "{x}: {:?}", g.decay());
            // θ = 0 makes the potential even.
            for j in 1..20 {
                assert!((g.get(j, 0) - g.get(-j, 0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_window_matches_large_dense_inverse() {
        let (alpha, lambda, theta) = (0.382, 0.8, 0.1);
        let z = Complex64::new(0.3, 1.0);
        let g = resolvent(&real(alpha), lambda, theta, z, 16).unwrap();
        let r = 150i64;
        let n = (2 * r + 1) as usize;
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            let site = i as i64 - r;
            m[(i, i)] = Complex64::new(potential(lambda, theta + site as f64 * alpha), 0.0) - z;
            if i + 1 < n {
                m[(i, i + 1)] = Complex64::new(1.0, 0.0);
                m[(i + 1, i)] = Complex64::new(1.0, 0.0);
            }
        }
        let inv = m.try_inverse().unwrap();
        for i in -16..=16i64 {
            for j in -16..=16i64 {
                let dense = inv[((i + r) as usize, (j + r) as usize)];
                assert!((g.get(i, j) - dense).norm() < 1e-12, "{i},{j}");
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        for d in 0..20 {
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
            assert!((v - exact).abs() < 1e-13, "degree {d}");
        }
    }

    #[test]
    fn free_resolvent_closed_form() {
        let z = Complex64::new(0.0, 3.0);
        let g = resolvent(&real(0.3), 0.0, 0.0, z, 64).unwrap();
        // ζ + 1/ζ = z with |ζ| < 1, G_{j,0} = ζ^{|j|}/(ζ − 1/ζ).
        let disc = (z * z - 4.0).sqrt();
        let mut zeta = (z - disc) / 2.0;
        if zeta.norm() > 1.0 {
            zeta = (z + disc) / 2.0;
        }
        for j in -20i64..=20 {
            let expected = zeta.powu(j.unsigned_abs() as u32) / (zeta - 1.0 / zeta);
            assert!((g.get(j, 0) - expected).norm() < 1e-12, "j = {j}");
        }
        let rate = -zeta.norm().ln();
        assert!((g.decay().rate - rate).abs() < 1e-6);
    }

    #[test]
    fn resolvent_conjugation_symmetry() {
        let z = Complex64::new(0.7, 0.4);
        let a = resolvent(&real(0.37), 0.6, 0.2, z, 40).unwrap();
        let b = resolvent(&real(0.37), 0.6, 0.2, z.conj(), 40).unwrap();
        for i in -10..=10 {
            for j in -10..=10 {
                assert!((a.get(i, j).conj() - b.get(i, j)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn resolvent_refuses_spectrum() {
        let alpha = Frequency::Rational(RationalFrequency::new(1, 2).unwrap());
        let err = resolvent(&alpha, 0.5, 0.0, Complex64::new(1.5, 0.0), 32).unwrap_err();
        assert!(matches!(err, AmoError::TooCloseToSpectrum { .. }));
    }

    #[test]
    fn identity_and_cube() {
        let contour = ContourSpec::default_for(0.5);
        let one = AnalyticFunction::power(0);
        let id = function_of_operator(1.0 / 3.0, 0.5, 0.0, &one, &contour, 4).unwrap();
        for i in -4..=4 {
            for j in -4..=4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((id.get(i, j) - expected).norm() < 1e-10);
            }
        }
        let cube = function_of_operator(1.0 / 3.0, 0.5, 0.0, &AnalyticFunction::power(3), &contour, 5)
            .unwrap();
        let h3 = BandedWindow::operator(1.0 / 3.0, 0.5, 0.0, 12).power(3);
        for i in -5..=5 {
            for j in -5..=5 {
                assert!((cube.get(i, j).re - h3.get(i, j)).abs() < 1e-6);
            }
        }
        assert!(cube.max_imaginary() < 1e-8);
    }

    #[test]
    fn four_traces_of_identity_is_mass() {
        let contour = ContourSpec::default_for(0.25);
        let r = four_traces_analytic(0.4, 0.25, &AnalyticFunction::power(1), &contour, 1e-8).unwrap();
        assert!((r.value - 3.0).abs() < 1e-8);
    }

    #[test]
    fn half_frequency_cubic() {
        let contour = ContourSpec::default_for(0.5);
        let r = four_traces_analytic(0.5, 0.5, &AnalyticFunction::moment_antiderivative(1), &contour, 1e-8)
            .unwrap();
        assert!((r.value - 14.0 / 3.0).abs() < 1e-8);
    }
}
