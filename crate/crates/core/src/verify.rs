//! Invariant suites run by `amo verify`.
//!
//! Each suite returns one [`CheckOutcome`] per invariant. Randomised checks
//! draw their sample points from a ChaCha generator seeded by the caller, so
//! a run is reproducible from its seed.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base::{BivariatePolynomial, Frequency, IntervalUnion, RationalFrequency};
use crate::cocycle::{chambers_polynomial, transfer_matrix};
use crate::error::{AmoError, Result};
use crate::funcalc::{
    four_traces_analytic, function_of_operator, resolvent, AnalyticFunction, ContourSpec,
};
use crate::measures::{atomic_limit, integrate_function, integrate_monomial, normalized_moment};
use crate::spectral::{
    eigensystem, intersection_spectrum, intersection_spectrum_checked, interlacing_counts,
    spectrum_union, FiniteOperator,
};
use crate::sympoly::{
    evaluate_moment, even_power_combination, normalized_moment_polynomial, symbolic_moment, symbolic_t, verify_duality,
    verify_t_patterns, verify_t_relation,
};
use crate::traces::{
    duality_bis_defect, fourier_duality_check, moment_four_traces,
    moment_four_traces_with_window, default_window, projection_defect, two_traces_integral,
    BandedWindow,
};
use crate::spectral::Boundary;

/// Names accepted by [`run_suite`], in the order `amo verify` runs them.
pub const SUITES: [&str; 8] = [
    "base", "cocycle", "spectral", "parity", "traces", "sympoly", "funcalc", "measures",
];

/// Result of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

struct Recorder {
    suite: &'static str,
    out: Vec<CheckOutcome>,
}

impl Recorder {
    fn new(suite: &'static str) -> Self {
        Recorder {
            suite,
            out: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(CheckOutcome {
            suite: self.suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Records a bound `value ≤ tol`.
    fn bound(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        self.check(name, value <= tol, format!("{value:.3e} (tolerance {tol:.0e})"));
    }

    fn result<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(name, false, e.to_string());
                None
            }
        }
    }
}

/// Runs one suite.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match name {
        "base" => suite_base(&mut rng),
        "cocycle" => suite_cocycle(&mut rng),
        "spectral" => suite_spectral(),
        "parity" => suite_parity(),
        "traces" => suite_traces(),
        "sympoly" => suite_sympoly(&mut rng),
        "funcalc" => suite_funcalc(),
        "measures" => suite_measures(),
        other => {
            return Err(AmoError::InvalidInput(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(out)
}

/// Runs the named suites, or all of them.
pub fn run_suites(names: &[String], seed: u64) -> Result<Vec<CheckOutcome>> {
    let selected: Vec<&str> = if names.is_empty() {
        SUITES.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    let mut out = Vec::new();
    for s in selected {
        log::info!("running suite {s}");
        out.extend(run_suite(s, seed)?);
    }
    Ok(out)
}

fn rf(p: i64, q: i64) -> RationalFrequency {
    RationalFrequency::new(p, q).expect("valid fraction")
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `λ^j · (num/den) · (1+t)^m · Σ_r inner_r t^r`.
fn lambda_term(j: u32, num: i64, den: i64, m: u32, inner: &[(i64, i64)]) -> BivariatePolynomial {
    let mut p = BivariatePolynomial::zero();
    for (r, &(n, d)) in inner.iter().enumerate() {
        p.add_term(j, r as u32, ratio(n, d));
    }
    let one_plus_t = &BivariatePolynomial::one() + &BivariatePolynomial::t();
    (&p * &one_plus_t.pow(m)).scale(&ratio(num, den))
}

fn sum(terms: Vec<BivariatePolynomial>) -> BivariatePolynomial {
    terms
        .iter()
        .fold(BivariatePolynomial::zero(), |acc, t| &acc + t)
}

const ONE: &[(i64, i64)] = &[(1, 1)];
const GEOM4: &[(i64, i64)] = &[(1, 1); 4];
const GEOM6: &[(i64, i64)] = &[(1, 1); 6];
const GEOM8: &[(i64, i64)] = &[(1, 1); 8];

/// The printed second moment polynomial.
pub fn reference_p2() -> BivariatePolynomial {
    sum(vec![
        lambda_term(0, 1, 1, 0, ONE),
        lambda_term(1, -3, 2, 1, ONE),
        lambda_term(2, 3, 2, 1, ONE),
        lambda_term(3, -1, 1, 0, ONE),
    ])
    .scale(&ratio(16, 3))
}

/// The printed fourth moment polynomial.
pub fn reference_p4() -> BivariatePolynomial {
    sum(vec![
        lambda_term(0, 1, 1, 0, ONE),
        lambda_term(2, 5, 2, 0, GEOM4),
        lambda_term(4, 5, 4, 2, ONE),
        lambda_term(1, -5, 4, 2, ONE),
        lambda_term(3, -5, 2, 0, GEOM4),
        lambda_term(5, -1, 1, 0, ONE),
    ])
    .scale(&ratio(64, 5))
}

/// The printed `T_6`.
pub fn reference_t6() -> BivariatePolynomial {
    sum(vec![
        lambda_term(0, 1, 1, 0, ONE),
        lambda_term(2, 7, 2, 0, GEOM6),
        lambda_term(4, 7, 4, 2, &[(2, 1), (0, 1), (3, 1), (-4, 1), (4, 1)]),
        lambda_term(6, 7, 8, 3, ONE),
    ])
}

/// The printed `T_8`.
pub fn reference_t8() -> BivariatePolynomial {
    sum(vec![
        lambda_term(0, 1, 1, 0, ONE),
        lambda_term(2, 9, 2, 0, GEOM8),
        lambda_term(
            4,
            9,
            4,
            2,
            &[(3, 1), (0, 1), (6, 1), (-8, 1), (9, 1), (8, 1), (-4, 1), (-16, 1), (16, 1)],
        ),
        lambda_term(
            6,
            9,
            1,
            3,
            &[(5, 12), (0, 1), (3, 4), (-2, 1), (4, 1), (-4, 1), (2, 1)],
        ),
        lambda_term(8, 9, 16, 4, ONE),
    ])
}

fn suite_base(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let mut r = Recorder::new("base");
    let mut involution = true;
    for _ in 0..20 {
        let d = rng.gen_range(1..6u32);
        let mut p = BivariatePolynomial::zero();
        for _ in 0..6 {
            let j = rng.gen_range(0..=d);
            let t = rng.gen_range(0..4u32);
            p.add_term(j, t, ratio(rng.gen_range(-9..10), rng.gen_range(1..7)));
        }
        let twice = p
            .dual_transform(d)
            .and_then(|q| q.dual_transform(d))
            .map(|q| q == p);
        involution &= twice.unwrap_or(false);
    }
    r.check("dual transform is an involution", involution, "20 random polynomials");
    let reduced = RationalFrequency::new(6, 8).map(|a| (a.p(), a.q()));
    r.check("fractions are reduced", reduced == Ok((3, 4)), format!("{reduced:?}"));
    let merged = IntervalUnion::new([(2.0, 3.0), (0.0, 1.0), (1.0, 1.5)]);
    r.check(
        "touching intervals merge",
        merged.intervals() == [(0.0, 1.5), (2.0, 3.0)],
        merged.to_string(),
    );
    r.out
}

fn suite_cocycle(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let mut r = Recorder::new("cocycle");
    let mut worst_det: f64 = 0.0;
    for _ in 0..50 {
        let alpha = rng.gen::<f64>();
        let lambda = rng.gen_range(0.0..3.0);
        let theta = rng.gen::<f64>();
        let e = rng.gen_range(-5.0..5.0);
        let n = rng.gen_range(1..20usize);
        let t = transfer_matrix::<f64>(alpha, lambda, theta, e, n);
        let scale = t.m.iter().flatten().map(|x| x * x).sum::<f64>().max(1.0);
        worst_det = worst_det.max((t.det() - 1.0).abs() / scale);
    }
    r.bound("unimodular transfer matrices", worst_det, 1e-12);
    let mut worst_phase: f64 = 0.0;
    for q in 1..=8i64 {
        let alpha = rf(1, q);
        for _ in 0..5 {
            let lambda = rng.gen_range(0.1..2.0);
            let e = rng.gen_range(-3.0..3.0);
            let base = transfer_matrix::<f64>(alpha.value(), lambda, 0.0, e, q as usize).trace()
                + 2.0 * lambda.powi(q as i32);
            let theta = rng.gen::<f64>();
            let other = transfer_matrix::<f64>(alpha.value(), lambda, theta, e, q as usize).trace()
                + 2.0
                    * lambda.powi(q as i32)
                    * (2.0 * std::f64::consts::PI * q as f64 * theta).cos();
            worst_phase = worst_phase.max((base - other).abs() / base.abs().max(1.0));
        }
    }
    r.bound("Chambers phase independence", worst_phase, 1e-9);
    let mut monic = true;
    for q in 1..=10 {
        if let Some(p) = r.result("Chambers interpolation", chambers_polynomial(&rf(1, q), 0.5)) {
            monic &= p.degree() == q as usize && (p.leading_coefficient() - 1.0).abs() < 1e-9;
        } else {
            monic = false;
        }
    }
    r.check("Chambers polynomial is monic of degree q", monic, "q ≤ 10, λ = 0.5");
    r.out
}

fn suite_spectral() -> Vec<CheckOutcome> {
    let mut r = Recorder::new("spectral");
    let mut worst: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(12) {
        for &lambda in &[0.1, 0.25, 0.5, 0.8, 1.25, 1.9] {
            match intersection_spectrum_checked(&alpha, lambda) {
                Ok(b) => worst = worst.max((b.measure() - (4.0 - 4.0 * lambda).abs()).abs()),
                Err(e) => {
                    r.check(format!("Σ⁻ for {alpha}, λ = {lambda}"), false, e.to_string());
                    worst = f64::INFINITY;
                }
            }
        }
    }
    r.bound("measure identity |Σ⁻| = |4−4λ| (q ≤ 12)", worst, 1e-8);
    if let Some(b) = r.result("half frequency", intersection_spectrum(&rf(1, 2), 0.5)) {
        let u = b.union();
        let d = u.endpoint_distance(&IntervalUnion::new([(-2.0, -1.0), (1.0, 2.0)]));
        r.bound("Σ⁻_{1/2,1/2} = [−2,−1] ∪ [1,2]", d, 1e-10);
    }
    if let Some(u) = r.result("free spectrum", spectrum_union(&rf(1, 2), 0.0)) {
        let d = u.endpoint_distance(&IntervalUnion::new([(-2.0, 2.0)]));
        r.bound("Σ⁺_{1/2,0} = [−2,2]", d, 1e-10);
    }
    let mut nested = true;
    for alpha in RationalFrequency::enumerate(8) {
        for &lambda in &[0.3, 0.7, 1.6] {
            let (Ok(minus), Ok(plus)) = (
                intersection_spectrum(&alpha, lambda),
                spectrum_union(&alpha, lambda),
            ) else {
                nested = false;
                continue;
            };
            nested &= minus.union().is_subset_of(&plus, 1e-9);
        }
    }
    r.check("Σ⁻ ⊆ Σ⁺", nested, "q ≤ 8");
    r.out
}

/// Whether both spectra entering the interlacing count are resolvable in
/// double precision: their edges differ by about `min(λ, 1/λ)^q`.
pub fn interlacing_resolvable(q: u64, lambda: f64) -> bool {
    lambda != 1.0 && lambda.min(1.0 / lambda).powi(q as i32) >= 1e-10
}

fn suite_parity() -> Vec<CheckOutcome> {
    let mut r = Recorder::new("parity");
    let mut failures = Vec::new();
    let mut checked = 0;
    for alpha in RationalFrequency::enumerate(15) {
        for &lambda in &[0.1, 0.5, 1.0, 2.0, 3.0] {
            for (label, op) in [
                ("anti(0)", FiniteOperator::anti_at_zero(&alpha, lambda)),
                ("per(theta+)", FiniteOperator::per_at_theta_plus(&alpha, lambda)),
            ] {
                checked += 1;
                match eigensystem(&op) {
                    Ok(es) if es.parities_alternate() => {}
                    Ok(_) => failures.push(format!("{label} {alpha} λ={lambda}")),
                    Err(e) => failures.push(format!("{label} {alpha} λ={lambda}: {e}")),
                }
            }
        }
    }
    r.check(
        "parity alternation (q ≤ 15)",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{checked} operators")
        } else {
            failures.join("; ")
        },
    );
    let mut bad = Vec::new();
    for alpha in RationalFrequency::enumerate(15) {
        for &lambda in &[0.2, 0.5, 0.8, 1.5, 2.0, 3.0] {
            if !interlacing_resolvable(alpha.q(), lambda) {
                continue;
            }
            match interlacing_counts(&alpha, lambda) {
                Ok(c) if c.iter().all(|&n| n == 2) => {}
                Ok(c) => bad.push(format!("{alpha} λ={lambda}: {c:?}")),
                Err(e) => bad.push(format!("{alpha} λ={lambda}: {e}")),
            }
        }
    }
    r.check(
        "two edge eigenvalues between consecutive anti(0) eigenvalues",
        bad.is_empty(),
        bad.join("; "),
    );
    r.out
}

fn suite_traces() -> Vec<CheckOutcome> {
    let mut r = Recorder::new("traces");
    let mut worst: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(10) {
        for &lambda in &[0.3, 0.6, 1.7] {
            for k in 0..=3u32 {
                let oracle = integrate_monomial(&alpha, lambda, 2 * k);
                let four = moment_four_traces(alpha.value(), lambda, k as usize);
                let poly = evaluate_moment(k, alpha.value(), lambda);
                match (oracle, four, poly) {
                    (Ok(o), Ok(f), Ok(p)) => worst = worst.max((o - f).abs()).max((o - p).abs()),
                    _ => worst = f64::INFINITY,
                }
            }
        }
    }
    r.bound("oracle / four-traces / polynomial triangle (q ≤ 10, k ≤ 3)", worst, 1e-8);
    let mut sat: f64 = 0.0;
    for k in 0..=5usize {
        let a = moment_four_traces_with_window(0.3819660112501051, 0.7, k, default_window(k));
        let b = moment_four_traces_with_window(0.3819660112501051, 0.7, k, default_window(k) + 4);
        sat = match (a, b) {
            (Ok(a), Ok(b)) => sat.max((a - b).abs() / a.abs().max(1.0)),
            _ => f64::INFINITY,
        };
    }
    r.bound("window saturation", sat, 1e-12);
    let mut bis: f64 = 0.0;
    for &lambda in &[0.5, 2.0] {
        for k in 0..=4 {
            bis = bis.max(duality_bis_defect(0.2718, lambda, k).unwrap_or(f64::INFINITY));
        }
    }
    r.bound("duality between α/2 at λ and 0 at 1/λ", bis, 1e-9);
    let mut fourier: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(8) {
        for &lambda in &[0.5, 2.0] {
            fourier = fourier.max(fourier_duality_check(&alpha, lambda).unwrap_or(f64::INFINITY));
        }
    }
    r.bound("Fourier duality residual (q ≤ 8)", fourier, 1e-10);
    let mut proj: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(8) {
        for boundary in [Boundary::Periodic, Boundary::Antiperiodic] {
            for k in 0..=3 {
                let d = projection_defect(&alpha, 0.6, 0.17, boundary, 2 * k + 1);
                proj = proj.max(d);
            }
        }
    }
    r.bound("projection identity (q ≤ 8)", proj, 1e-9);
    let mut two: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(8) {
        for k in 0..=3 {
            let phi = move |e: f64| e.powi(2 * k as i32 + 1) / (2 * k + 1) as f64;
            let via_two = two_traces_integral(&alpha, 0.4, &phi);
            let via_four = moment_four_traces(alpha.value(), 0.4, k);
            two = match (via_two, via_four) {
                (Ok(a), Ok(b)) => two.max((a - b).abs()),
                _ => f64::INFINITY,
            };
        }
    }
    r.bound("two-traces equals four-traces (q ≤ 8)", two, 1e-9);
    r.out
}

fn suite_sympoly(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let mut r = Recorder::new("sympoly");
    let mut dual = true;
    for k in 0..=6 {
        dual &= verify_duality(k).unwrap_or(false) && verify_t_relation(k).unwrap_or(false);
    }
    r.check("self-duality of P_{2k} and the T relation (k ≤ 6)", dual, "exact");
    for (k, name, reference) in [
        (1, "P_2", reference_p2()),
        (2, "P_4", reference_p4()),
    ] {
        let ok = symbolic_moment(k).map(|p| p == reference).unwrap_or(false);
        r.check(format!("{name} coefficients"), ok, "exact");
    }
    for (k, name, reference) in [(3, "T_6", reference_t6()), (4, "T_8", reference_t8())] {
        let ok = symbolic_t(k).map(|p| p == reference).unwrap_or(false);
        r.check(format!("{name} coefficients"), ok, "exact");
    }
    let patterns = (1..=6).all(|k| verify_t_patterns(k).unwrap_or(false));
    r.check("λ² and λ^{2k} patterns, (1+t)^j divisibility (k ≤ 6)", patterns, "exact");
    let odd = (0..=3).all(|k| even_power_combination(k).map(|p| p.is_zero()).unwrap_or(false));
    r.check("odd moments vanish identically (k ≤ 3)", odd, "exact");
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let q = rng.gen_range(1..=20i64);
        let p = rng.gen_range(0..q);
        let alpha = rf(p, q);
        let lambda = rng.gen_range(0.05..0.95);
        let k = rng.gen_range(0..=4u32);
        let o = integrate_monomial(&alpha, lambda, 2 * k);
        let e = evaluate_moment(k, alpha.value(), lambda);
        worst = match (o, e) {
            (Ok(o), Ok(e)) => worst.max((o - e).abs()),
            _ => f64::INFINITY,
        };
    }
    r.bound("polynomial equals band oracle at 50 random points", worst, 1e-8);
    r.out
}

fn suite_funcalc() -> Vec<CheckOutcome> {
    let mut r = Recorder::new("funcalc");
    let contour = ContourSpec::default_for(0.5);
    if let Some(w) = r.result(
        "E³ window",
        function_of_operator(1.0 / 3.0, 0.5, 0.0, &AnalyticFunction::power(3), &contour, 6),
    ) {
        let h3 = BandedWindow::operator(1.0 / 3.0, 0.5, 0.0, 12).power(3);
        let mut d: f64 = 0.0;
        for i in -6..=6 {
            for j in -6..=6 {
                d = d.max((w.get(i, j) - Complex64::new(h3.get(i, j), 0.0)).norm());
            }
        }
        r.bound("Φ(E) = E³ equals the banded cube", d, 1e-6);
    }
    let alpha = rf(2, 5);
    let contour = ContourSpec::default_for(0.4);
    if let (Some(v), Some(o)) = (
        r.result(
            "four traces of sin",
            four_traces_analytic(alpha.value(), 0.4, &AnalyticFunction::sin(), &contour, 1e-8),
        ),
        r.result("band oracle", integrate_function(&alpha, 0.4, f64::sin)),
    ) {
        r.bound("four traces of sin equal the band integral of cos", (v.value - o).abs(), 1e-6);
    }
    let mut decay = true;
    for z in [Complex64::new(0.0, 0.1), Complex64::new(3.5, 0.0), Complex64::new(0.5, 1.0)] {
        match resolvent(&Frequency::Rational(alpha), 0.4, 0.0, z, 128) {
            Ok(g) => decay &= g.decay().rate > 0.0,
            Err(_) => decay = false,
        }
    }
    r.check("fitted decay rate is positive", decay, "three spectral parameters");
    r.out
}

fn suite_measures() -> Vec<CheckOutcome> {
    let mut r = Recorder::new("measures");
    let mut odd: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(12) {
        for &lambda in &[0.1, 0.5, 0.9, 1.3, 1.9] {
            for n in [1, 3, 5] {
                odd = odd.max(integrate_monomial(&alpha, lambda, n).map(f64::abs).unwrap_or(f64::INFINITY));
            }
        }
    }
    r.bound("odd moments vanish (q ≤ 12)", odd, 1e-10);
    // The literal continuity tolerance holds for k ≤ 1. For larger k the
    // slope of c̃_{2k} at λ = 1 reaches k·4^k, so the check compares the step
    // with its exact first-order expansion instead.
    let delta = 1e-4;
    let mut cont: f64 = 0.0;
    let mut taylor: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(6) {
        let a = Frequency::Rational(alpha);
        for k in 0..=3 {
            let at = normalized_moment(&a, 1.0, k);
            let slope = normalized_moment_polynomial(k)
                .map(|p| p.lambda_derivative().eval_exact(1.0, alpha.t()));
            for sign in [-1.0, 1.0] {
                let step = match (&at, normalized_moment(&a, 1.0 + sign * delta, k)) {
                    (Ok(x), Ok(y)) => y - x,
                    _ => f64::INFINITY,
                };
                if k <= 1 {
                    cont = cont.max(step.abs());
                }
                let predicted = slope.as_ref().map(|s| sign * delta * s).unwrap_or(f64::NAN);
                taylor = taylor.max(((step - predicted) / delta.powi(2)).abs());
            }
        }
    }
    r.bound("normalised moments are continuous at λ = 1 (k ≤ 1)", cont, 1e-3);
    r.bound("first-order expansion of c̃_{2k} at λ = 1, error / δ² (k ≤ 3)", taylor, 1e4);
    let mut atoms: f64 = 0.0;
    for alpha in RationalFrequency::enumerate(8) {
        let a = Frequency::Rational(alpha);
        match atomic_limit(&alpha) {
            Ok(m) => {
                for k in 0..=4 {
                    atoms = atoms.max(
                        normalized_moment(&a, 1.0, k)
                            .map(|v| (v - m.moment(2 * k)).abs())
                            .unwrap_or(f64::INFINITY),
                    );
                }
            }
            Err(_) => atoms = f64::INFINITY,
        }
    }
    r.bound("atomic limit moments (q ≤ 8)", atoms, 1e-7);
    r.out
}
