//! Randomised property tests for the invariants of every module.

use std::f64::consts::PI;
use std::process::Command;

use almost_mathieu::cocycle::{
    chambers_polynomial, chambers_value_extended, trace_and_derivative, transfer_matrix,
};
use almost_mathieu::funcalc::{
    four_traces_analytic, resolvent, spectral_distance, AnalyticFunction, ContourSpec,
};
use almost_mathieu::measures::{
    atomic_limit, integrate_monomial, normalized_moment, SpectralMeasure,
};
use almost_mathieu::spectral::{
    build_finite_operator, eigensystem, eigenvalues, interlacing_counts, intersection_spectrum,
    spectrum_union, theta_spectrum, Boundary, FiniteOperator,
};
use almost_mathieu::sympoly::{
    chebyshev_table, even_power_combination, evaluate_moment, normalized_moment_polynomial,
    symbolic_moment, symbolic_t,
};
use almost_mathieu::traces::{
    duality_bis_defect, moment_four_traces, moment_four_traces_with_window, projection_defect,
    two_traces_integral,
};
use almost_mathieu::{
    base::{divisible_by_one_plus_t, rational_to_f64},
    BivariatePolynomial, Frequency, IntervalUnion, Phase,
    RationalFrequency,
};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use twofloat::TwoFloat;

fn rational(qmax: u64) -> impl Strategy<Value = RationalFrequency> {
    (1..=qmax)
        .prop_flat_map(|q| (0..q, Just(q)))
        .prop_map(|(p, q)| RationalFrequency::new(p as i64, q as i64).unwrap())
}

fn small_poly() -> impl Strategy<Value = BivariatePolynomial> {
    prop::collection::vec((0u32..4, 0u32..4, -5i64..=5, 1i64..=4), 0..6).prop_map(|terms| {
        let mut p = BivariatePolynomial::zero();
        for (j, r, n, d) in terms {
            p.add_term(j, r, BigRational::new(BigInt::from(n), BigInt::from(d)));
        }
        p
    })
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

// Base types.

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn interval_normalisation_is_idempotent(
        raw in prop::collection::vec((-10.0f64..10.0, 0.0f64..3.0), 0..12)
    ) {
        let u = IntervalUnion::new(raw.iter().map(|&(a, w)| (a, a + w)));
        let again = IntervalUnion::new(u.intervals().iter().copied());
        prop_assert_eq!(&again, &u);
        for w in u.intervals().windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
    }

    #[test]
    fn polynomial_ring_laws(a in small_poly(), b in small_poly(), c in small_poly()) {
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn dual_transform_is_an_involution(
        body in small_poly(),
        d in 1u32..6,
        top in 1i64..5,
        constant in 1i64..5,
    ) {
        let mut p = BivariatePolynomial::zero();
        for (&(j, r), c) in body.terms() {
            if j < d {
                p.add_term(j, r, c.clone());
            }
        }
        p.add_term(d, 0, BigRational::from_integer(BigInt::from(top)));
        p.add_term(0, 0, BigRational::from_integer(BigInt::from(constant)));
        prop_assume!(p.lambda_degree() == Some(d) && !p.coeff(0, 0).is_zero());
        let twice = p.dual_transform(d).unwrap().dual_transform(d).unwrap();
        prop_assert_eq!(twice, p);
    }

    #[test]
    fn frequencies_are_reduced_and_phases_wrapped(p in 0i64..50, q in 1i64..50, k in 1i64..6, x in -5.0f64..5.0) {
        prop_assert_eq!(RationalFrequency::new(k * p, k * q).unwrap(), RationalFrequency::new(p, q).unwrap());
        let v = Phase::new(x).value();
        prop_assert!((0.0..1.0).contains(&v));
    }
}

// Cocycle.

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn transfer_matrices_are_unimodular(
        alpha in 0.0f64..1.0,
        lambda in 0.0f64..3.0,
        theta in 0.0f64..1.0,
        e in -5.0f64..5.0,
        n in 1usize..20,
    ) {
        let t = transfer_matrix::<f64>(alpha, lambda, theta, e, n);
        // Relative to the squared entry size, the scale of the rounding in
        // the determinant.
        let scale = t.m.iter().flatten().map(|x| x * x).sum::<f64>().max(1.0);
        prop_assert!((t.det() - 1.0).abs() / scale <= 1e-12);
    }

    #[test]
    fn chambers_sum_is_phase_independent(
        alpha in rational(40),
        lambda in 0.1f64..2.0,
        e in -3.0f64..3.0,
    ) {
        let q = alpha.q() as usize;
        let values: Vec<(f64, f64)> = (0..16)
            .map(|i| {
                let theta = i as f64 / 16.0 + 0.013;
                let t = transfer_matrix::<f64>(alpha.value(), lambda, theta, e, q);
                let norm = t.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
                let v = t.trace()
                    + 2.0 * lambda.powi(q as i32) * (2.0 * PI * q as f64 * theta).cos();
                (v, norm)
            })
            .collect();
        let mean = values.iter().map(|v| v.0).sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / values.len() as f64;
        let scale = values.iter().map(|v| v.1).fold(1.0f64, f64::max);
        prop_assert!(var.sqrt() / scale < 1e-9, "spread {} at scale {}", var.sqrt(), scale);
    }

    #[test]
    fn chambers_polynomial_is_monic(alpha in rational(30), lambda in 0.1f64..1.5) {
        let p = chambers_polynomial(&alpha, lambda).unwrap();
        prop_assert_eq!(p.degree(), alpha.q() as usize);
        prop_assert!((p.leading_coefficient() - 1.0).abs() < 1e-9);
    }
}

// Spectra.

fn lambda_grid() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.1, 0.25, 0.5, 0.8, 1.25, 1.9])
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn eigenvalues_solve_the_trace_condition(
        alpha in rational(30),
        lambda in prop::sample::select(vec![0.2f64, 0.5, 0.8, 1.5]),
        which in 0usize..3,
    ) {
        // Below this the band edges touch to within eigensolver resolution,
        // and the linearised shift below no longer bounds the eigenvalue error.
        prop_assume!(lambda.min(1.0 / lambda).powi(alpha.q() as i32) >= 1e-10);
        let theta = [Phase::new(0.0), alpha.theta_plus(), Phase::new(0.3)][which];
        let q = alpha.q() as i32;
        let offset = 2.0 * lambda.powi(q) * (2.0 * PI * q as f64 * theta.value()).cos();
        for boundary in [Boundary::Periodic, Boundary::Antiperiodic] {
            let op = build_finite_operator(&alpha, lambda, theta, boundary);
            let values = eigenvalues(&op).unwrap();
            // The f64 trace carries rounding of order ε·Π‖A_j‖, which reaches
            // 1e-9 at q = 21. The residual is taken in double-double and
            // converted into the eigenvalue shift it implies.
            for &e in &values {
                let (chambers, _) = chambers_value_extended(&alpha, lambda, TwoFloat::from(e));
                let residual = f64::from(chambers) - offset - boundary.trace_value();
                let (_, slope) = trace_and_derivative(alpha.value(), lambda, theta.value(), e, q as usize);
                let shift = residual.abs() / slope.abs();
                prop_assert!(shift <= 1e-12 * e.abs().max(1.0), "E = {} shift {}", e, shift);
            }
        }
    }

    #[test]
    fn parities_alternate(alpha in rational(15), lambda in prop::sample::select(vec![0.1, 0.5, 1.0, 2.0, 3.0])) {
        for op in [
            FiniteOperator::anti_at_zero(&alpha, lambda),
            FiniteOperator::per_at_theta_plus(&alpha, lambda),
        ] {
            prop_assert!(eigensystem(&op).unwrap().parities_alternate());
        }
    }

    #[test]
    fn two_edges_between_consecutive_antiperiodic_eigenvalues(
        alpha in rational(15),
        lambda in prop::sample::select(vec![0.1f64, 0.3, 0.5, 0.8, 1.25, 2.0, 3.0]),
    ) {
        // One Σ⁺ edge and one Σ⁻ edge per gap. Both are only resolvable while
        // λ^q stays well above the eigensolver's rounding.
        prop_assume!(lambda.min(1.0 / lambda).powi(alpha.q() as i32) >= 1e-10);
        let counts = interlacing_counts(&alpha, lambda).unwrap();
        prop_assert!(counts.iter().all(|&c| c == 2), "{:?}", counts);
    }

    #[test]
    fn intersection_spectrum_has_measure_four_minus_four_lambda(alpha in rational(30), lambda in lambda_grid()) {
        let b = intersection_spectrum(&alpha, lambda).unwrap();
        prop_assert!((b.union().measure() - (4.0 - 4.0 * lambda).abs()).abs() <= 1e-8);
    }

    #[test]
    fn spectra_are_nested(alpha in rational(20), lambda in lambda_grid(), theta in 0.0f64..1.0) {
        // Edges where Q_λ barely reaches ±(2 + 2λ^q) have |Q'| near λ^q, so
        // f64 rounding of Q moves them by about ε/λ^q.
        prop_assume!(lambda.min(1.0 / lambda).powi(alpha.q() as i32) >= 1e-10);
        let minus = intersection_spectrum(&alpha, lambda).unwrap().union();
        let at_theta = theta_spectrum(&alpha, lambda, Phase::new(theta)).unwrap();
        let plus = spectrum_union(&alpha, lambda).unwrap();
        prop_assert!(at_theta.is_subset_of(&plus, 1e-9));
        // For λ > 1 the intersection over θ is empty while Σ⁻ is not.
        if lambda < 1.0 {
            prop_assert!(minus.is_subset_of(&at_theta, 1e-9));
        }
    }
}

// Trace formulas.

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn windows_beyond_the_minimum_do_not_change_moments(
        alpha in 0.0f64..1.0,
        lambda in 0.1f64..2.0,
        k in 0usize..=5,
    ) {
        let a = moment_four_traces_with_window(alpha, lambda, k, 3 * k + 4).unwrap();
        let b = moment_four_traces_with_window(alpha, lambda, k, 3 * k + 8).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn duality_bis_holds(alpha in 0.0f64..1.0, lambda in prop::sample::select(vec![0.5, 2.0]), k in 0usize..=4) {
        prop_assert!(duality_bis_defect(alpha, lambda, k).unwrap() <= 1e-9);
    }

    #[test]
    fn folded_powers_match_finite_operators(alpha in rational(12), theta in 0.0f64..1.0, lambda in 0.1f64..2.0, k in 0usize..=5) {
        for boundary in [Boundary::Periodic, Boundary::Antiperiodic] {
            // Entries of H^m are as large as ‖H‖^m, so rounding scales with it.
            let scale = (2.0 + 2.0 * lambda).powi(2 * k as i32 + 1);
            prop_assert!(projection_defect(&alpha, lambda, theta, boundary, 2 * k + 1) <= 1e-9f64.max(1e-14 * scale));
        }
    }

    #[test]
    fn two_and_four_traces_agree(alpha in rational(20), lambda in 0.05f64..0.95, k in 0u32..=5) {
        let m = 2 * k as i32 + 1;
        let phi = move |e: f64| e.powi(m) / m as f64;
        let two = two_traces_integral(&alpha, lambda, &phi).unwrap();
        let four = moment_four_traces(alpha.value(), lambda, k as usize).unwrap();
        prop_assert!((two - four).abs() <= 1e-9, "{} vs {}", two, four);
    }

    #[test]
    fn moment_routes_agree(alpha in rational(20), lambda in prop::sample::select(vec![0.3, 0.6, 1.7]), k in 0u32..=5) {
        let oracle = integrate_monomial(&alpha, lambda, 2 * k).unwrap();
        let four = moment_four_traces(alpha.value(), lambda, k as usize).unwrap();
        let poly = evaluate_moment(k, alpha.value(), lambda).unwrap();
        prop_assert!((oracle - four).abs() <= 1e-8, "oracle {} four {}", oracle, four);
        prop_assert!((oracle - poly).abs() <= 1e-8, "oracle {} poly {}", oracle, poly);
        prop_assert!((four - poly).abs() <= 1e-8);
    }
}

// Exact polynomials.

proptest! {
    #![proptest_config(config(50))]

    #[test]
    fn symbolic_moments_match_the_band_oracle(alpha in rational(30), lambda in 0.0f64..1.0, k in 0u32..=4) {
        let p = symbolic_moment(k).unwrap();
        let v = p.eval_exact(lambda, alpha.t());
        let oracle = integrate_monomial(&alpha, lambda, 2 * k).unwrap();
        prop_assert!((v - oracle).abs() <= 1e-8, "{} vs {}", v, oracle);
    }

    #[test]
    fn chebyshev_rows_are_cosine_multiples(num in -1000i64..=1000, m in 0usize..=24) {
        // Exact evaluation at a rational c, so the only rounding is in the
        // reference cos(m·arccos c).
        let c = BigRational::new(BigInt::from(num), BigInt::from(1000));
        let table = chebyshev_table(24);
        let mut acc = BigRational::zero();
        let mut power = BigRational::one();
        for coeff in &table[m] {
            acc += BigRational::from_integer(coeff.clone()) * &power;
            power *= &c;
        }
        let exact = rational_to_f64(&acc);
        let want = (m as f64 * (num as f64 / 1000.0).acos()).cos();
        prop_assert!((exact - want).abs() <= 1e-12);
    }
}

#[test]
fn leading_coefficients_are_exact() {
    for k in 0..=6u32 {
        let p = symbolic_moment(k).unwrap();
        let lead = p.lambda_coefficient(2 * k + 1);
        let want = BigRational::new(-BigInt::from(2).pow(2 * k + 2), BigInt::from(2 * k + 1));
        assert_eq!(lead.len(), 1, "k = {k}: {lead:?}");
        assert_eq!(lead[0], want, "k = {k}");
    }
}

#[test]
fn moment_pipeline_never_keeps_odd_powers() {
    // `symbolic_moment` fails with `OddPowerSurvived` if an odd power of
    // cos πα survives the reduction.
    for k in 0..=8u32 {
        symbolic_moment(k).unwrap();
    }
}

#[test]
fn t_coefficients_carry_powers_of_one_plus_t() {
    for k in 1..=6u32 {
        let t = symbolic_t(k).unwrap();
        for j in 0..=k {
            let coeffs = t.lambda_coefficient(2 * j);
            assert!(divisible_by_one_plus_t(&coeffs, j), "k = {k}, j = {j}");
        }
    }
}

#[test]
fn alternating_even_power_combination_vanishes() {
    for k in 0..=3u32 {
        assert!(even_power_combination(k).unwrap().is_zero(), "k = {k}");
    }
}

// Functional calculus.

fn frequency() -> impl Strategy<Value = Frequency> {
    prop_oneof![
        rational(8).prop_map(Frequency::Rational),
        (0.01f64..0.99).prop_map(Frequency::Real),
    ]
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn resolvent_decay_grows_with_distance(
        alpha in frequency(),
        lambda in 0.2f64..2.0,
        x in -4.0f64..4.0,
    ) {
        let mut prev: Option<f64> = None;
        for s in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let z = Complex64::new(x, s);
            let d = spectral_distance(&alpha, lambda, z).unwrap();
            prop_assert!(d >= 0.1);
            let g = resolvent(&alpha, lambda, 0.0, z, 128).unwrap();
            let rate = g.decay().rate;
            prop_assert!(rate > 0.0, "c1 = {} at z = {}", rate, z);
            // Coarse monotonicity along the ray, 10% slack.
            if let Some(p) = prev {
                prop_assert!(rate >= 0.9 * p, "{} after {} at z = {}", rate, p, z);
            }
            prev = Some(rate);
        }
    }

    #[test]
    fn resolvent_is_phase_covariant(
        alpha in 0.01f64..0.99,
        lambda in 0.2f64..2.0,
        theta in 0.0f64..1.0,
        r in -3i64..=3,
        x in -3.0f64..3.0,
    ) {
        let z = Complex64::new(x, 0.5);
        let a = Frequency::Real(alpha);
        let g = resolvent(&a, lambda, theta, z, 64).unwrap();
        let shifted = resolvent(&a, lambda, theta + r as f64 * alpha, z, 64).unwrap();
        for i in -5..=5i64 {
            for j in -5..=5i64 {
                prop_assert!((g.get(i + r, j + r) - shifted.get(i, j)).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn contour_shape_does_not_matter(alpha in 0.01f64..0.99, lambda in 0.2f64..1.8) {
        let f = AnalyticFunction::sin();
        let circle = four_traces_analytic(alpha, lambda, &f, &ContourSpec::default_for(lambda), 1e-8).unwrap();
        let rect = four_traces_analytic(alpha, lambda, &f, &ContourSpec::rectangle_for(lambda, 1.0, 256), 1e-8).unwrap();
        prop_assert!((circle.value - rect.value).abs() <= 1e-6, "{} vs {}", circle.value, rect.value);
    }

    #[test]
    fn analytic_four_traces_reduce_to_moments(alpha in 0.01f64..0.99, lambda in 0.2f64..1.8, k in 0u32..=3) {
        let f = AnalyticFunction::moment_antiderivative(k);
        let v = four_traces_analytic(alpha, lambda, &f, &ContourSpec::default_for(lambda), 1e-10).unwrap();
        let m = moment_four_traces(alpha, lambda, k as usize).unwrap();
        prop_assert!((v.value - m).abs() <= 1e-8, "{} vs {}", v.value, m);
    }
}

// Measures.

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn spectral_measure_mass(alpha in rational(30), lambda in lambda_grid()) {
        let m = SpectralMeasure::new(&alpha, lambda).unwrap();
        prop_assert!((m.mass - (4.0 - 4.0 * lambda).abs()).abs() <= 1e-8);
    }

    #[test]
    fn odd_moments_vanish(alpha in rational(30), lambda in lambda_grid(), k in 0u32..=3) {
        let v = integrate_monomial(&alpha, lambda, 2 * k + 1).unwrap();
        prop_assert!(v.abs() <= 1e-10, "{}", v);
    }

    #[test]
    fn normalised_moments_are_continuous_at_criticality(alpha in rational(20), k in 0u32..=3) {
        let f = Frequency::Rational(alpha);
        let delta = 1e-4;
        let at_one = normalized_moment(&f, 1.0, k).unwrap();
        // The exact polynomial gives the slope at λ = 1.
        let slope = normalized_moment_polynomial(k)
            .unwrap()
            .lambda_derivative()
            .eval_exact(1.0, alpha.t());
        for side in [-1.0, 1.0] {
            let near = normalized_moment(&f, 1.0 + side * delta, k).unwrap();
            if k <= 1 {
                prop_assert!((near - at_one).abs() <= 1e-3);
            }
            let taylor = (near - at_one - side * delta * slope).abs() / (delta * delta);
            prop_assert!(taylor <= 1e4, "k = {}: {}", k, taylor);
        }
    }

    #[test]
    fn atomic_limit_matches_the_critical_polynomial(alpha in rational(12), k in 0u32..=4) {
        let m = atomic_limit(&alpha).unwrap();
        prop_assert!((m.total_weight() - 1.0).abs() <= 1e-12);
        let v = normalized_moment(&Frequency::Rational(alpha), 1.0, k).unwrap();
        prop_assert!((m.moment(2 * k) - v).abs() <= 1e-7);
    }
}

// Command line.

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn cli_output_is_deterministic(p in 1i64..20, q in 2i64..20, lambda in 0.05f64..2.5) {
        let alpha = RationalFrequency::new(p % q, q).unwrap().to_string();
        let lambda = format!("{lambda:.4}");
        for args in [
            vec!["moment", "--alpha", alpha.as_str(), "--lambda", lambda.as_str(), "--k-max", "3"],
            vec!["spectrum", "--alpha", alpha.as_str(), "--lambda", lambda.as_str(), "--format", "json"],
        ] {
            let run = || Command::new(env!("CARGO_BIN_EXE_amo")).args(&args).output().unwrap();
            let (a, b) = (run(), run());
            prop_assert!(a.status.success());
            prop_assert_eq!(&a.stdout, &b.stdout);
            prop_assert!(a.stderr.is_empty());
        }
    }
}

#[test]
fn cli_errors_go_to_stderr_with_exit_one() {
    // The gap at 0 is closed for α = 1/2, λ = 1/2, so 0 lies in Σ⁺.
    let out = Command::new(env!("CARGO_BIN_EXE_amo"))
        .args(["gap", "--alpha", "1/2", "--lambda", "0.5", "--lo", "-3", "--hi", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}
