//! Periodic and antiperiodic restrictions, their eigensystems, and the
//! spectra `Σ_{α,λ,θ}`, `Σ⁺` and `Σ⁻` for rational frequencies.
//!
//! Two independent routes are implemented. The eigenvalue route diagonalises
//! the `q × q` matrices `H^per_{q,θ}` and `H^anti_{q,θ}`. The preimage route
//! bisects `Q_λ(E) = ±level` on the monotone pieces of the Chambers polynomial,
//! evaluating `Q_λ` through transfer-matrix traces. Public entry points use
//! one route and check it against the other.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::base::{potential, IntervalUnion, Phase, RationalFrequency};
use crate::cocycle::{chambers_value, trace_and_derivative};
use crate::error::{AmoError, Result};
use crate::traces::ReflectionKind;

/// Endpoint agreement required between the eigenvalue and preimage routes.
pub const ENDPOINT_TOLERANCE: f64 = 1e-8;

/// Which space of `q`-(anti)periodic sequences the operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    Antiperiodic,
}

impl Boundary {
    /// `ψ_{n+q} = sign · ψ_n`.
    pub fn sign(&self) -> f64 {
        match self {
            Boundary::Periodic => 1.0,
            Boundary::Antiperiodic => -1.0,
        }
    }

    /// The value of `tr T_{q,θ}` at the eigenvalues.
    pub fn trace_value(&self) -> f64 {
        2.0 * self.sign()
    }
}

/// The restriction of `H_{α,λ,θ}` to `q`-periodic or `q`-antiperiodic
/// sequences, written in the coordinates `ψ_0, …, ψ_{q−1}`.
#[derive(Debug, Clone)]
pub struct FiniteOperator {
    alpha: RationalFrequency,
    lambda: f64,
    theta: Phase,
    boundary: Boundary,
    reflection: Option<ReflectionKind>,
    matrix: DMatrix<f64>,
}

impl FiniteOperator {
    pub fn alpha(&self) -> RationalFrequency {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> Phase {
        self.theta
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn reflection(&self) -> Option<ReflectionKind> {
        self.reflection
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Attaches the reflection used for parity tags. Fails when the
    /// reflection does not commute with the operator.
    pub fn with_reflection(mut self, kind: ReflectionKind) -> Result<Self> {
        let r = reflection_matrix(self.dim(), self.boundary, kind);
        let comm = &r * &self.matrix - &self.matrix * &r;
        let size = self.matrix.amax().max(1.0);
        if comm.amax() > 1e-12 * size {
            return Err(AmoError::InvalidInput(format!(
                "reflection {kind:?} does not commute with H at θ = {}",
                self.theta.value()
            )));
        }
        self.reflection = Some(kind);
        Ok(self)
    }

    /// `H^anti_{q,0}` with the diagonal-centred reflection `R_0`.
    pub fn anti_at_zero(alpha: &RationalFrequency, lambda: f64) -> Self {
        build_finite_operator(alpha, lambda, Phase::new(0.0), Boundary::Antiperiodic)
            .with_reflection(ReflectionKind::DiagCentered)
            .expect("R_0 commutes with H_0")
    }

    /// `H^per_{q,θ₊}` with the offset reflection `R_{θ₊}`.
    pub fn per_at_theta_plus(alpha: &RationalFrequency, lambda: f64) -> Self {
        build_finite_operator(alpha, lambda, alpha.theta_plus(), Boundary::Periodic)
            .with_reflection(ReflectionKind::Offset)
            .expect("R_θ₊ commutes with H_θ₊")
    }
}

/// Builds `H^per_{q,θ}` or `H^anti_{q,θ}`.
///
/// The diagonal is `V(θ + nα)`. For `q ≥ 3` the hopping is 1 with corner
/// entries `±1`. For `q = 1` the hopping folds into the diagonal (`V ± 2`) and
/// for `q = 2` both neighbours of a site coincide, giving off-diagonal 2
/// (periodic) or 0 (antiperiodic).
pub fn build_finite_operator(
    alpha: &RationalFrequency,
    lambda: f64,
    theta: Phase,
    boundary: Boundary,
) -> FiniteOperator {
    let q = alpha.q() as usize;
    let s = boundary.sign();
    let mut m = DMatrix::<f64>::zeros(q, q);
    for n in 0..q {
        let phase = theta.value() + ((n as u64 * alpha.p()) % alpha.q()) as f64 / q as f64;
        m[(n, n)] = potential(lambda, phase);
    }
    match q {
        1 => m[(0, 0)] += 2.0 * s,
        2 => {
            m[(0, 1)] = 1.0 + s;
            m[(1, 0)] = 1.0 + s;
        }
        _ => {
            for n in 0..q - 1 {
                m[(n, n + 1)] = 1.0;
                m[(n + 1, n)] = 1.0;
            }
            m[(0, q - 1)] = s;
            m[(q - 1, 0)] = s;
        }
    }
    FiniteOperator {
        alpha: *alpha,
        lambda,
        theta,
        boundary,
        reflection: None,
        matrix: m,
    }
}

/// The reflection `(Rψ)_n = ψ_{s−n}` restricted to (anti)periodic sequences,
/// with `s = 0` for the diagonal-centred kind and `s = −1` for the offset
/// kind. Wrapping across a period picks up the boundary sign.
pub fn reflection_matrix(q: usize, boundary: Boundary, kind: ReflectionKind) -> DMatrix<f64> {
    let s = kind.shift();
    let qi = q as i64;
    let mut r = DMatrix::<f64>::zeros(q, q);
    for n in 0..qi {
        let raw = s - n;
        let m = raw.rem_euclid(qi);
        let periods = (raw - m) / qi;
        let sign = if periods % 2 == 0 { 1.0 } else { boundary.sign() };
        r[(n as usize, m as usize)] = sign;
    }
    r
}

/// Parity of an eigenvector under the attached reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
    Undetermined,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::Undetermined => "none",
        })
    }
}

/// Eigenvalues in decreasing order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub parities: Vec<Parity>,
}

impl EigenSystem {
    /// Whether the parities read even, odd, even, … in decreasing order.
    pub fn parities_alternate(&self) -> bool {
        self.parities.iter().enumerate().all(|(j, p)| {
            *p == if j % 2 == 0 {
                Parity::Even
            } else {
                Parity::Odd
            }
        })
    }
}

const PARITY_TOLERANCE: f64 = 1e-6;

fn classify(r: &DMatrix<f64>, v: &nalgebra::DVectorView<f64>) -> Parity {
    let rv = r * v;
    if (&rv - v).norm() <= PARITY_TOLERANCE {
        Parity::Even
    } else if (&rv + v).norm() <= PARITY_TOLERANCE {
        Parity::Odd
    } else {
        Parity::Undetermined
    }
}

/// Dense symmetric eigendecomposition with residual check and parity tags.
///
/// When a cluster of nearly equal eigenvalues yields mixed eigenvectors, the
/// reflection is diagonalised inside the cluster so that every returned
/// vector has a definite parity.
pub fn eigensystem(op: &FiniteOperator) -> Result<EigenSystem> {
    let m = op.matrix.clone();
    let dim = op.dim();
    let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 10_000).ok_or_else(|| {
        AmoError::EigenNonConvergence {
            dim,
            detail: format!("no convergence after 10000 sweeps for matrix {m}"),
        }
    })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }

    let norm = m.amax().max(1.0) * 3.0;
    for j in 0..dim {
        let v = vectors.column(j);
        let res = (&m * v - v * values[j]).norm();
        if res > 1e-9 * norm {
            return Err(AmoError::EigenNonConvergence {
                dim,
                detail: format!("residual {res:.3e} for eigenvalue {}", values[j]),
            });
        }
    }

    let mut parities = vec![Parity::Undetermined; dim];
    if let Some(kind) = op.reflection {
        let r = reflection_matrix(dim, op.boundary, kind);
        for j in 0..dim {
            parities[j] = classify(&r, &vectors.column(j));
        }
        if parities.contains(&Parity::Undetermined) {
            resolve_clusters(&m, &r, &mut values, &mut vectors, &mut parities);
        }
    }
    Ok(EigenSystem {
        values,
        vectors,
        parities,
    })
}

/// Rotates each cluster of nearly degenerate eigenvectors into eigenvectors
/// of the reflection and reorders the cluster by Rayleigh quotient.
fn resolve_clusters(
    m: &DMatrix<f64>,
    r: &DMatrix<f64>,
    values: &mut [f64],
    vectors: &mut DMatrix<f64>,
    parities: &mut [Parity],
) {
    let dim = values.len();
    let gap = 1e-7 * m.amax().max(1.0);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && values[end - 1] - values[end] < gap {
            end += 1;
        }
        let block = end - start;
        if block > 1 && parities[start..end].contains(&Parity::Undetermined) {
            let basis = vectors.columns(start, block).into_owned();
            let small = basis.transpose() * r * &basis;
            let small = (&small + small.transpose()) * 0.5;
            if let Some(inner) = SymmetricEigen::try_new(small, 1e-15, 10_000) {
                let rotated = &basis * &inner.eigenvectors;
                let mut items: Vec<(f64, usize)> = (0..block)
                    .map(|c| {
                        let v = rotated.column(c);
                        ((v.transpose() * m * v)[(0, 0)], c)
                    })
                    .collect();
                items.sort_by(|a, b| b.0.total_cmp(&a.0));
                for (slot, (rq, c)) in items.into_iter().enumerate() {
                    values[start + slot] = rq;
                    vectors.set_column(start + slot, &rotated.column(c));
                    parities[start + slot] = classify(r, &vectors.column(start + slot));
                }
            }
        }
        start = end;
    }
}

/// Eigenvalues only, in decreasing order.
pub fn eigenvalues(op: &FiniteOperator) -> Result<Vec<f64>> {
    Ok(eigensystem(op)?.values)
}

/// Largest `|tr T_{q,θ}(E) ∓ 2|` over the eigenvalues of `op`.
pub fn trace_consistency(op: &FiniteOperator, values: &[f64]) -> f64 {
    let q = op.dim();
    let target = op.boundary.trace_value();
    values
        .iter()
        .map(|&e| {
            let (tr, _) =
                trace_and_derivative(op.alpha.value(), op.lambda, op.theta.value(), e, q);
            (tr - target).abs()
        })
        .fold(0.0, f64::max)
}

/// Which eigenvalue family an endpoint of a band comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndpointSource {
    /// Eigenvalue of `H^per_{q,θ}` at the stated phase.
    Periodic(PhaseTag),
    /// Eigenvalue of `H^anti_{q,θ}` at the stated phase.
    Antiperiodic(PhaseTag),
}

/// The phase at which an endpoint eigenvalue was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseTag {
    Zero,
    ThetaPlus,
    Given,
}

impl fmt::Display for EndpointSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, tag) = match self {
            EndpointSource::Periodic(t) => ("per", t),
            EndpointSource::Antiperiodic(t) => ("anti", t),
        };
        let phase = match tag {
            PhaseTag::Zero => "0",
            PhaseTag::ThetaPlus => "theta+",
            PhaseTag::Given => "theta",
        };
        write!(f, "{kind}({phase})")
    }
}

/// One band `J_j` with endpoint provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    /// 1-based index counted from the top of the spectrum.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub lo_source: EndpointSource,
    pub hi_source: EndpointSource,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// The intersection spectrum as the ordered list of bands `J_1, …, J_q`,
/// from the top of the spectrum down.
#[derive(Debug, Clone)]
pub struct OrderedBandList {
    pub alpha: RationalFrequency,
    pub lambda: f64,
    pub bands: Vec<Band>,
}

impl OrderedBandList {
    pub fn union(&self) -> IntervalUnion {
        IntervalUnion::new(self.bands.iter().map(|b| (b.lo, b.hi)))
    }

    pub fn measure(&self) -> f64 {
        self.bands.iter().map(Band::width).sum()
    }
}

/// `Σ⁻_{p/q,λ}` from the eigenvalues of `H^anti_{q,0}` and `H^per_{q,θ₊}`.
///
/// For `λ < 1` band `j` runs between the `j`-th largest eigenvalues of the
/// two operators, with the antiperiodic one at the bottom for odd `j`. For
/// `λ > 1` the list is computed at `1/λ` and scaled by `λ`; by the rational
/// Fourier duality the periodic and antiperiodic roles swap. At `λ = 1` the
/// bands degenerate to the `q` roots of `Q_1`.
pub fn intersection_spectrum(alpha: &RationalFrequency, lambda: f64) -> Result<OrderedBandList> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AmoError::InvalidInput(format!("coupling must be ≥ 0, got {lambda}")));
    }
    if lambda > 1.0 {
        let sub = intersection_spectrum(alpha, 1.0 / lambda)?;
        let swap = |s: EndpointSource| match s {
            EndpointSource::Periodic(_) => EndpointSource::Antiperiodic(PhaseTag::Zero),
            EndpointSource::Antiperiodic(_) => EndpointSource::Periodic(PhaseTag::ThetaPlus),
        };
        let bands = sub
            .bands
            .iter()
            .map(|b| Band {
                index: b.index,
                lo: lambda * b.lo,
                hi: lambda * b.hi,
                lo_source: swap(b.lo_source),
                hi_source: swap(b.hi_source),
            })
            .collect();
        return Ok(OrderedBandList {
            alpha: *alpha,
            lambda,
            bands,
        });
    }

    let anti = eigenvalues(&FiniteOperator::anti_at_zero(alpha, lambda))?;
    let per = eigenvalues(&FiniteOperator::per_at_theta_plus(alpha, lambda))?;
    let anti_src = EndpointSource::Antiperiodic(PhaseTag::Zero);
    let per_src = EndpointSource::Periodic(PhaseTag::ThetaPlus);
    let mut bands = Vec::with_capacity(anti.len());
    for (j, (&a, &p)) in anti.iter().zip(&per).enumerate() {
        let index = j + 1;
        if lambda == 1.0 {
            if (a - p).abs() > ENDPOINT_TOLERANCE {
                return Err(AmoError::InterlacingViolation(format!(
                    "at λ = 1 the eigenvalues {a} and {p} of band {index} should coincide"
                )));
            }
            let e = 0.5 * (a + p);
            bands.push(Band {
                index,
                lo: e,
                hi: e,
                lo_source: anti_src,
                hi_source: per_src,
            });
            continue;
        }
        let (lo, lo_source, hi, hi_source) = if index % 2 == 1 {
            (a, anti_src, p, per_src)
        } else {
            (p, per_src, a, anti_src)
        };
        if lo > hi + ENDPOINT_TOLERANCE {
            return Err(AmoError::InterlacingViolation(format!(
                "band {index} of Σ⁻ for α = {alpha}, λ = {lambda} has lo {lo} > hi {hi}"
            )));
        }
        bands.push(Band {
            index,
            lo,
            hi: hi.max(lo),
            lo_source,
            hi_source,
        });
    }
    Ok(OrderedBandList {
        alpha: *alpha,
        lambda,
        bands,
    })
}

/// Largest endpoint distance between two lists of `q` bands, compared in
/// increasing order before any merging of touching bands.
pub fn band_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let sorted = |v: &[(f64, f64)]| {
        let mut v = v.to_vec();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    sorted(a)
        .iter()
        .zip(&sorted(b))
        .map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs()))
        .fold(0.0, f64::max)
}

/// [`intersection_spectrum`] cross-checked against the preimage
/// `Q_λ⁻¹([−2|1−λ^q|, 2|1−λ^q|])` to [`ENDPOINT_TOLERANCE`].
pub fn intersection_spectrum_checked(
    alpha: &RationalFrequency,
    lambda: f64,
) -> Result<OrderedBandList> {
    let bands = intersection_spectrum(alpha, lambda)?;
    if lambda != 1.0 {
        let q = alpha.q() as i32;
        let level = 2.0 * (1.0 - lambda.powi(q)).abs();
        let other = preimage_bands(alpha, lambda, level)?;
        let mine: Vec<(f64, f64)> = bands.bands.iter().map(|b| (b.lo, b.hi)).collect();
        let d = band_distance(&mine, &other);
        if d > ENDPOINT_TOLERANCE {
            return Err(AmoError::RouteDisagreement(format!(
                "Σ⁻ for α = {alpha}, λ = {lambda}: eigenvalue and preimage routes differ by {d:.3e}"
            )));
        }
    }
    Ok(bands)
}

/// `Σ⁺_{p/q,λ} = Q_λ⁻¹([−2−2λ^q, 2+2λ^q])` by bisection, cross-checked against
/// the eigenvalues of `H^per_{q,0}` and `H^anti_{q,θ₊}`.
pub fn spectrum_union(alpha: &RationalFrequency, lambda: f64) -> Result<IntervalUnion> {
    let q = alpha.q() as i32;
    let by_preimage = preimage_bands(alpha, lambda, 2.0 + 2.0 * lambda.powi(q))?;
    let by_eigen = union_bands_by_eigenvalues(alpha, lambda)?;
    let d = band_distance(&by_preimage, &by_eigen);
    if d > ENDPOINT_TOLERANCE {
        return Err(AmoError::RouteDisagreement(format!(
            "Σ⁺ for α = {alpha}, λ = {lambda}: preimage and eigenvalue routes differ by {d:.3e}"
        )));
    }
    Ok(IntervalUnion::new(by_preimage))
}

/// `Σ⁺` bands paired from the `j`-th largest eigenvalues of `H^per_{q,0}`
/// and `H^anti_{q,θ₊}`.
pub fn union_bands_by_eigenvalues(
    alpha: &RationalFrequency,
    lambda: f64,
) -> Result<Vec<(f64, f64)>> {
    let per = eigenvalues(&build_finite_operator(
        alpha,
        lambda,
        Phase::new(0.0),
        Boundary::Periodic,
    ))?;
    let anti = eigenvalues(&build_finite_operator(
        alpha,
        lambda,
        alpha.theta_plus(),
        Boundary::Antiperiodic,
    ))?;
    Ok(per
        .into_iter()
        .zip(anti)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect())
}

/// `Σ⁺` as an interval union from the eigenvalue route alone.
pub fn union_by_eigenvalues(alpha: &RationalFrequency, lambda: f64) -> Result<IntervalUnion> {
    Ok(IntervalUnion::new(union_bands_by_eigenvalues(alpha, lambda)?))
}

/// `Σ_{α,λ,θ}` for one phase, pairing the `j`-th largest periodic and
/// antiperiodic eigenvalues at that phase.
pub fn theta_spectrum(alpha: &RationalFrequency, lambda: f64, theta: Phase) -> Result<IntervalUnion> {
    let per = eigenvalues(&build_finite_operator(alpha, lambda, theta, Boundary::Periodic))?;
    let anti = eigenvalues(&build_finite_operator(alpha, lambda, theta, Boundary::Antiperiodic))?;
    Ok(IntervalUnion::new(per.into_iter().zip(anti)))
}

/// `Q_λ(E)` and its derivative; for `λ > 1` it is evaluated through
/// `Q_λ(λE) = λ^q Q_{1/λ}(E)`, which keeps the transfer matrices bounded.
fn chambers_stable(alpha: &RationalFrequency, lambda: f64, e: f64) -> (f64, f64) {
    if lambda > 1.0 {
        let q = alpha.q() as i32;
        let (v, d) = chambers_value(alpha, 1.0 / lambda, e / lambda);
        (lambda.powi(q) * v, lambda.powi(q - 1) * d)
    } else {
        chambers_value(alpha, lambda, e)
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `q − 1` critical points of `Q_λ` for `λ ≤ 1`, in increasing order.
///
/// Sign changes of `Q'` are located on a uniform grid that is refined until
/// all `q − 1` are found, then polished by bisection.
pub fn critical_points(alpha: &RationalFrequency, lambda: f64) -> Result<Vec<f64>> {
    let q = alpha.q() as usize;
    if q == 1 {
        return Ok(Vec::new());
    }
    let half = 2.0 + 2.0 * lambda;
    let deriv = |e: f64| chambers_value(alpha, lambda, e).1;
    let mut n = 64 * q * q;
    loop {
        let h = 2.0 * half / n as f64;
        let mut found = Vec::with_capacity(q - 1);
        let mut prev_e = -half;
        let mut prev_d = deriv(prev_e);
        for i in 1..=n {
            let e = -half + i as f64 * h;
            let d = deriv(e);
            if d == 0.0 {
                found.push(e);
            } else if prev_d != 0.0 && (d > 0.0) != (prev_d > 0.0) {
                found.push(bisect(prev_e, e, deriv));
            }
            prev_e = e;
            prev_d = d;
        }
        if found.len() == q - 1 {
            return Ok(found);
        }
        if found.len() > q - 1 || n >= 1 << 24 {
            return Err(AmoError::RootCountMismatch {
                q: q as u64,
                lambda,
                expected: q - 1,
                found: found.len(),
            });
        }
        n *= 4;
    }
}

/// `Q_λ⁻¹([−level, level])` by bisection on the monotone pieces of `Q_λ`.
///
/// Returns exactly `q` bands before merging. For `λ > 1` the computation runs
/// at `1/λ` with level `level/λ^q` and is scaled back.
pub fn preimage_bands(alpha: &RationalFrequency, lambda: f64, level: f64) -> Result<Vec<(f64, f64)>> {
    if lambda > 1.0 {
        let q = alpha.q() as i32;
        let sub = preimage_bands(alpha, 1.0 / lambda, level / lambda.powi(q))?;
        return Ok(sub.into_iter().map(|(a, b)| (lambda * a, lambda * b)).collect());
    }
    let q = alpha.q() as usize;
    let outer = 2.0 + 2.0 * lambda + 1.0;
    let mut breaks = vec![-outer];
    breaks.extend(critical_points(alpha, lambda)?);
    breaks.push(outer);
    let value = |e: f64| chambers_stable(alpha, lambda, e).0;

    let mut bands = Vec::with_capacity(q);
    for w in breaks.windows(2) {
        let (l, r) = (w[0], w[1]);
        let (vl, vr) = (value(l), value(r));
        // A closed gap is a tangency of Q_λ with ±level at a critical point.
        // Rounding can push that value a few ulps past the level, and a
        // bisection would then hunt a double root to only √ε accuracy.
        let inside = |v: f64| v.abs() <= level * (1.0 + 64.0 * f64::EPSILON);
        let endpoint = |from_value: f64| {
            let target = if from_value > 0.0 { level } else { -level };
            bisect(l, r, |e| value(e) - target)
        };
        let a = if inside(vl) { l } else { endpoint(vl) };
        let b = if inside(vr) { r } else { endpoint(vr) };
        if (vl > level && vr > level) || (vl < -level && vr < -level) {
            continue;
        }
        bands.push((a, b));
    }
    if bands.len() != q {
        return Err(AmoError::RootCountMismatch {
            q: q as u64,
            lambda,
            expected: q,
            found: bands.len(),
        });
    }
    Ok(bands)
}

/// `Σ⁻` through the preimage `Q_λ⁻¹([−2|1−λ^q|, 2|1−λ^q|])`.
pub fn intersection_preimage(alpha: &RationalFrequency, lambda: f64) -> Result<IntervalUnion> {
    let q = alpha.q() as i32;
    let level = 2.0 * (1.0 - lambda.powi(q)).abs();
    Ok(IntervalUnion::new(preimage_bands(alpha, lambda, level)?))
}

/// `Σ⁺` through the preimage `Q_λ⁻¹([−2−2λ^q, 2+2λ^q])`.
pub fn union_preimage(alpha: &RationalFrequency, lambda: f64) -> Result<IntervalUnion> {
    let q = alpha.q() as i32;
    let level = 2.0 + 2.0 * lambda.powi(q);
    Ok(IntervalUnion::new(preimage_bands(alpha, lambda, level)?))
}

/// Roots of `Q_λ(E) = level` on every monotone piece where one exists,
/// in increasing order.
pub fn level_roots(alpha: &RationalFrequency, lambda: f64, level: f64) -> Result<Vec<f64>> {
    if lambda > 1.0 {
        let q = alpha.q() as i32;
        let sub = level_roots(alpha, 1.0 / lambda, level / lambda.powi(q))?;
        return Ok(sub.into_iter().map(|e| lambda * e).collect());
    }
    let outer = 2.0 + 2.0 * lambda + 1.0;
    let mut breaks = vec![-outer];
    breaks.extend(critical_points(alpha, lambda)?);
    breaks.push(outer);
    let f = |e: f64| chambers_value(alpha, lambda, e).0 - level;
    let mut roots = Vec::new();
    for w in breaks.windows(2) {
        let (fl, fr) = (f(w[0]), f(w[1]));
        if fl == 0.0 {
            if roots.last() != Some(&w[0]) {
                roots.push(w[0]);
            }
        } else if fr == 0.0 || (fl > 0.0) != (fr > 0.0) {
            roots.push(bisect(w[0], w[1], f));
        }
    }
    Ok(roots)
}

/// For consecutive eigenvalues of `H^anti_{q,0}`, the number of eigenvalues
/// of `H^anti_{q,θ₊}` and `H^per_{q,0}` strictly between them, counted with
/// multiplicity.
pub fn interlacing_counts(alpha: &RationalFrequency, lambda: f64) -> Result<Vec<usize>> {
    let anti0 = eigenvalues(&FiniteOperator::anti_at_zero(alpha, lambda))?;
    let mut others = eigenvalues(&build_finite_operator(
        alpha,
        lambda,
        alpha.theta_plus(),
        Boundary::Antiperiodic,
    ))?;
    others.extend(eigenvalues(&build_finite_operator(
        alpha,
        lambda,
        Phase::new(0.0),
        Boundary::Periodic,
    ))?);
    Ok(anti0
        .windows(2)
        .map(|w| others.iter().filter(|&&e| e < w[0] && e > w[1]).count())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rf(p: i64, q: i64) -> RationalFrequency {
        RationalFrequency::new(p, q).unwrap()
    }

    #[test]
    fn small_q_matrices() {
        let per1 = build_finite_operator(&rf(0, 1), 0.5, Phase::new(0.0), Boundary::Periodic);
        assert_eq!(per1.matrix()[(0, 0)], 3.0);
        let anti2 = build_finite_operator(&rf(1, 2), 0.5, Phase::new(0.0), Boundary::Antiperiodic);
        let ev = eigenvalues(&anti2).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] + 1.0).abs() < 1e-14);
        let free3 = build_finite_operator(&rf(1, 3), 0.0, Phase::new(0.0), Boundary::Periodic);
        let ev = eigenvalues(&free3).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-12);
        assert!((ev[1] + 1.0).abs() < 1e-12 && (ev[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_hit_trace_two() {
        for a in RationalFrequency::enumerate(12) {
            for &l in &[0.2, 0.5, 1.5] {
                for th in [Phase::new(0.0), a.theta_plus(), Phase::new(0.3)] {
                    for b in [Boundary::Periodic, Boundary::Antiperiodic] {
                        let op = build_finite_operator(&a, l, th, b);
                        let ev = eigenvalues(&op).unwrap();
                        assert!(trace_consistency(&op, &ev) < 1e-7, "{a} {l} {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn parity_example_q5() {
        let es = eigensystem(&FiniteOperator::anti_at_zero(&rf(1, 5), 0.5)).unwrap();
        assert!(es.parities_alternate(), "{:?}", es.parities);
    }

    #[test]
    fn half_frequency_spectra() {
        let a = rf(1, 2);
        let minus = intersection_spectrum_checked(&a, 0.5).unwrap().union();
        let expected = IntervalUnion::new([(-2.0, -1.0), (1.0, 2.0)]);
        assert!(minus.endpoint_distance(&expected) < 1e-12);
        let plus = spectrum_union(&a, 0.5).unwrap();
        let edge = 2.0 * (1.0f64 + 0.25).sqrt();
        assert!(plus.endpoint_distance(&IntervalUnion::new([(-edge, edge)])) < 1e-10);
        let big = intersection_spectrum_checked(&a, 2.0).unwrap().union();
        let expected = IntervalUnion::new([(-4.0, -2.0), (2.0, 4.0)]);
        assert!(big.endpoint_distance(&expected) < 1e-12);
    }

    #[test]
    fn zero_frequency_minus_spectrum() {
        let s = intersection_spectrum(&rf(0, 1), 0.5).unwrap().union();
        assert!(s.endpoint_distance(&IntervalUnion::new([(-1.0, 1.0)])) < 1e-14);
    }

    #[test]
    fn free_union_spectrum() {
        let s = spectrum_union(&rf(1, 2), 0.0).unwrap();
        assert!(s.endpoint_distance(&IntervalUnion::new([(-2.0, 2.0)])) < 1e-10);
    }

    #[test]
    fn one_third_union_has_three_bands_and_routes_agree() {
        let a = rf(1, 3);
        let bands = preimage_bands(&a, 0.5, 2.0 + 2.0 * 0.125).unwrap();
        assert_eq!(bands.len(), 3);
        let s = spectrum_union(&a, 0.5).unwrap();
        let e = union_by_eigenvalues(&a, 0.5).unwrap();
        assert!((s.measure() - e.measure()).abs() < 1e-8);
    }

    #[test]
    fn measure_identity_small_grid() {
        for a in RationalFrequency::enumerate(10) {
            for &l in &[0.3, 0.8, 1.25] {
                let s = intersection_spectrum_checked(&a, l).unwrap();
                assert!((s.measure() - (4.0 - 4.0 * l as f64).abs()).abs() < 1e-8, "{a} {l}");
            }
        }
    }

    #[test]
    fn critical_coupling_gives_points() {
        let s = intersection_spectrum(&rf(1, 3), 1.0).unwrap();
        assert_eq!(s.bands.len(), 3);
        assert!(s.measure() == 0.0);
        let roots = level_roots(&rf(1, 3), 1.0, 0.0).unwrap();
        for (b, r) in s.bands.iter().rev().zip(&roots) {
            assert!((b.lo - r).abs() < 1e-9);
        }
    }

    #[test]
    fn chambers_duality_scaling() {
        let a = rf(2, 7);
        let l: f64 = 1.7;
        for &e in &[-3.0, 0.4, 2.2] {
            let lhs = chambers_value(&a, l, l * e).0;
            let rhs = l.powi(7) * chambers_value(&a, 1.0 / l, e).0;
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn containments_for_sampled_phases() {
        let a = rf(2, 5);
        for &l in &[0.4, 1.6] {
            let minus = intersection_spectrum(&a, l).unwrap().union();
            let plus = spectrum_union(&a, l).unwrap();
            for &th in &[0.0, 0.13, 0.5, 0.77] {
                let s = theta_spectrum(&a, l, Phase::new(th)).unwrap();
                if l < 1.0 {
                    assert!(minus.is_subset_of(&s, 1e-9));
                }
                assert!(s.is_subset_of(&plus, 1e-9));
            }
        }
    }
}
