//! Transfer matrices of the Schrödinger cocycle and the Chambers polynomial.
//!
//! With `Π_{E,θ} = [[E − V(θ), −1], [1, 0]]` the period-`n` transfer matrix is
//! `T_{n,θ}(E) = Π_{E,θ+(n−1)α} ⋯ Π_{E,θ}`. For `α = p/q` its trace splits as
//! `tr T_{q,θ}(E) = −2λ^q cos 2πqθ + Q_λ(E)` with a monic degree-`q`
//! polynomial `Q_λ` that does not depend on `θ`.

use std::f64::consts::PI;

use num_traits::Num;
use twofloat::TwoFloat;

use crate::base::extended::cos_turns;
use crate::base::{potential, RationalFrequency};
use crate::error::{AmoError, Result};

/// A 2×2 matrix over `f64` or `Complex64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Copy + Num> TransferMatrix<T> {
    pub fn identity() -> Self {
        TransferMatrix {
            m: [[T::one(), T::zero()], [T::zero(), T::one()]],
        }
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.m;
        let b = &rhs.m;
        TransferMatrix {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
        }
    }
}

/// `θ + jα` reduced to `[0, 1)` before taking the cosine.
fn site_phase(alpha: f64, theta: f64, j: usize) -> f64 {
    let x = theta + j as f64 * alpha;
    x - x.floor()
}

/// The single factor `Π_{E,θ}`.
pub fn one_step<T: Copy + Num + From<f64>>(lambda: f64, theta: f64, e: T) -> TransferMatrix<T> {
    let v = T::from(potential(lambda, theta));
    TransferMatrix {
        m: [[e - v, T::zero() - T::one()], [T::one(), T::zero()]],
    }
}

/// `T_{n,θ}(E) = Π_{E,θ+(n−1)α} ⋯ Π_{E,θ}` for real or complex energy.
pub fn transfer_matrix<T: Copy + Num + From<f64>>(
    alpha: f64,
    lambda: f64,
    theta: f64,
    e: T,
    n: usize,
) -> TransferMatrix<T> {
    let mut acc = TransferMatrix::identity();
    for j in 0..n {
        acc = one_step(lambda, site_phase(alpha, theta, j), e).mul(&acc);
    }
    acc
}

/// `tr T_{n,θ}(E)` together with its derivative in `E`.
pub fn trace_and_derivative(alpha: f64, lambda: f64, theta: f64, e: f64, n: usize) -> (f64, f64) {
    // d(Π T)/dE = Π' T + Π dT with Π' = [[1, 0], [0, 0]].
    let mut t = TransferMatrix::<f64>::identity();
    let mut dt = TransferMatrix {
        m: [[0.0, 0.0], [0.0, 0.0]],
    };
    for j in 0..n {
        let step = one_step(lambda, site_phase(alpha, theta, j), e);
        let d_from_step = TransferMatrix {
            m: [[t.m[0][0], t.m[0][1]], [0.0, 0.0]],
        };
        let d_from_rest = step.mul(&dt);
        dt = TransferMatrix {
            m: [
                [
                    d_from_step.m[0][0] + d_from_rest.m[0][0],
                    d_from_step.m[0][1] + d_from_rest.m[0][1],
                ],
                [d_from_rest.m[1][0], d_from_rest.m[1][1]],
            ],
        };
        t = step.mul(&t);
    }
    (t.trace(), dt.trace())
}

/// `Q_λ(E)` evaluated directly as `tr T_{q,0}(E) + 2λ^q`, with its derivative.
///
/// This is the numerically robust route used for root finding: it never
/// forms the monomial or Chebyshev coefficients of `Q_λ`.
pub fn chambers_value(alpha: &RationalFrequency, lambda: f64, e: f64) -> (f64, f64) {
    let q = alpha.q() as usize;
    let (tr, dtr) = trace_and_derivative(alpha.value(), lambda, 0.0, e, q);
    (tr + 2.0 * lambda.powi(q as i32), dtr)
}

/// `Q_λ` recovered by Chebyshev interpolation of traces.
#[derive(Debug, Clone)]
pub struct ChambersPolynomial {
    alpha: RationalFrequency,
    lambda: f64,
    half_width: f64,
    chebyshev: Vec<f64>,
}

impl ChambersPolynomial {
    pub fn alpha(&self) -> RationalFrequency {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn degree(&self) -> usize {
        self.chebyshev.len() - 1
    }

    /// Coefficients in the Chebyshev basis `T_k(E / L)`, `L = 2 + 2λ`.
    pub fn chebyshev_coefficients(&self) -> &[f64] {
        &self.chebyshev
    }

    /// Clenshaw evaluation of the interpolant.
    pub fn eval(&self, e: f64) -> f64 {
        let x = e / self.half_width;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.chebyshev.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.chebyshev[0]
    }

    /// Coefficients of `Q` in the monomial basis `E^m`, lowest degree first.
    pub fn monomial_coefficients(&self) -> Vec<f64> {
        let n = self.chebyshev.len();
        // Monomial expansion of T_k(x), built by T_{k+1} = 2x T_k − T_{k−1}.
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        prev[0] = 1.0;
        if n > 1 {
            cur[1] = 1.0;
        }
        let mut in_x = vec![0.0; n];
        in_x[0] += self.chebyshev[0];
        if n > 1 {
            in_x[1] += self.chebyshev[1];
        }
        for k in 2..n {
            let mut next = vec![0.0; n];
            for i in 0..n - 1 {
                next[i + 1] += 2.0 * cur[i];
            }
            for i in 0..n {
                next[i] -= prev[i];
            }
            for i in 0..n {
                in_x[i] += self.chebyshev[k] * next[i];
            }
            prev = cur;
            cur = next;
        }
        let mut scale = 1.0;
        for c in in_x.iter_mut() {
            *c *= scale;
            scale /= self.half_width;
        }
        in_x
    }

    pub fn leading_coefficient(&self) -> f64 {
        let q = self.degree();
        if q == 0 {
            return self.chebyshev[0];
        }
        self.chebyshev[q] * 2f64.powi(q as i32 - 1) / self.half_width.powi(q as i32)
    }
}

/// Interpolates `Q_λ` from `q + 1` trace evaluations at phase `θ* = 0`.
///
/// The interpolant is checked against direct traces at `q + 1` further points
/// and the result must be monic. A failed check means `q` is too large for
/// the floating-point route.
pub fn chambers_polynomial(alpha: &RationalFrequency, lambda: f64) -> Result<ChambersPolynomial> {
    let q = alpha.q() as usize;
    let n = q + 1;
    let half_width = 2.0 + 2.0 * lambda;
    let a = alpha.value();
    let shift = 2.0 * lambda.powi(q as i32);
    let sample = |e: f64| transfer_matrix(a, lambda, 0.0, e, q).trace() + shift;

    let values: Vec<f64> = (0..n)
        .map(|i| sample(half_width * (PI * (i as f64 + 0.5) / n as f64).cos()))
        .collect();
    let mut chebyshev: Vec<f64> = (0..n)
        .map(|k| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(i, f)| f * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos())
                .sum();
            2.0 * s / n as f64
        })
        .collect();
    chebyshev[0] /= 2.0;

    let poly = ChambersPolynomial {
        alpha: *alpha,
        lambda,
        half_width,
        chebyshev,
    };

    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut mismatch = 0.0f64;
    for i in 0..n {
        let e = half_width * (PI * i as f64 / n as f64).cos();
        mismatch = mismatch.max((poly.eval(e) - sample(e)).abs() / scale);
    }
    let monic = (poly.leading_coefficient() - 1.0).abs();
    if mismatch > 1e-9 || monic > 1e-9 {
        return Err(AmoError::InterpolationConditioning {
            q: q as u64,
            lambda,
            mismatch: mismatch.max(monic),
        });
    }
    Ok(poly)
}

/// `Q_λ(E)` and its derivative in double-double arithmetic.
///
/// The potential values `2λ cos 2π(jp/q)` are formed from exact residues
/// `jp mod q`, so the only rounding is that of the double-double operations.
pub fn chambers_value_extended(
    alpha: &RationalFrequency,
    lambda: f64,
    e: TwoFloat,
) -> (TwoFloat, TwoFloat) {
    let (p, q) = (alpha.p(), alpha.q());
    let lam = TwoFloat::from(lambda);
    let zero = TwoFloat::from(0.0);
    let one = TwoFloat::from(1.0);
    let mut t = TransferMatrix::<TwoFloat>::identity();
    let mut dt = TransferMatrix {
        m: [[zero, zero], [zero, zero]],
    };
    for j in 0..q {
        let v = TwoFloat::from(2.0) * lam * cos_turns((j * p) % q, q);
        let step = TransferMatrix {
            m: [[e - v, -one], [one, zero]],
        };
        let rest = step.mul(&dt);
        dt = TransferMatrix {
            m: [
                [t.m[0][0] + rest.m[0][0], t.m[0][1] + rest.m[0][1]],
                [rest.m[1][0], rest.m[1][1]],
            ],
        };
        t = step.mul(&t);
    }
    (t.trace() + TwoFloat::from(2.0) * lam.powi(q as i32), dt.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn rf(p: i64, q: i64) -> RationalFrequency {
        RationalFrequency::new(p, q).unwrap()
    }

    #[test]
    fn single_factor_trace() {
        let t = transfer_matrix(0.0, 0.5, 0.0, 3.0f64, 1);
        assert!((t.trace() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn free_laplacian_at_band_edge() {
        for q in 1..12 {
            let t = transfer_matrix(1.0 / q as f64, 0.0, 0.3, 2.0f64, q);
            assert!((t.trace() - 2.0).abs() < 1e-9, "q = {q}");
        }
    }

    #[test]
    fn half_frequency_trace() {
        for &(l, e, th) in &[(0.3, 1.1, 0.0), (1.7, -0.4, 0.2), (0.9, 2.5, 0.71)] {
            let t = transfer_matrix(0.5, l, th, e, 2).trace();
            let c = (2.0 * PI * th).cos();
            let expected = e * e - 4.0 * l * l * c * c - 2.0;
            assert!((t - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn determinant_is_one_for_complex_energy() {
        let z = Complex64::new(0.3, 0.7);
        for n in [1, 5, 25] {
            let t = transfer_matrix(0.3819660112501051, 1.3, 0.2, z, n);
            let size = t.m.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>();
            assert!((t.det() - Complex64::new(1.0, 0.0)).norm() < 1e-12 * size.max(1.0));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (a, l, th) = (2.0 / 7.0, 0.6, 0.13);
        for &e in &[-1.9, 0.2, 1.4] {
            let (_, d) = trace_and_derivative(a, l, th, e, 7);
            let h = 1e-6;
            let fd = (transfer_matrix(a, l, th, e + h, 7).trace()
                - transfer_matrix(a, l, th, e - h, 7).trace())
                / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 * d.abs().max(1.0));
        }
    }

    #[test]
    fn extended_chambers_matches_f64() {
        for (p, q) in [(1, 3), (2, 5), (5, 12), (7, 20)] {
            let alpha = RationalFrequency::new(p, q).unwrap();
            for &lambda in &[0.3, 1.0, 1.7] {
                for &e in &[-2.5, -0.4, 0.9, 3.1] {
                    let (v, d) = chambers_value(&alpha, lambda, e);
                    let (ve, de) = chambers_value_extended(&alpha, lambda, TwoFloat::from(e));
                    let scale = 1.0 + v.abs() + (e.abs() + 2.0 + 2.0 * lambda).powi(q as i32) * 1e-14;
                    assert!((f64::from(ve) - v).abs() <= 1e-12 * scale, "{alpha} {lambda} {e}");
                    assert!((f64::from(de) - d).abs() <= 1e-12 * (scale + d.abs()));
                }
            }
        }
    }

    #[test]
    fn chambers_small_cases() {
        let one = chambers_polynomial(&rf(0, 1), 0.7).unwrap();
        let m = one.monomial_coefficients();
        assert!(m[0].abs() < 1e-12 && (m[1] - 1.0).abs() < 1e-12);

        let l = 0.8;
        let half = chambers_polynomial(&rf(1, 2), l).unwrap();
        let m = half.monomial_coefficients();
        assert!((m[0] - (-2.0 * l * l - 2.0)).abs() < 1e-12);
        assert!(m[1].abs() < 1e-12);
        assert!((m[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chambers_theta_independence() {
        let a = rf(1, 3);
        let l: f64 = 0.5;
        for &e in &[-2.1, -0.3, 0.0, 1.7] {
            let vals: Vec<f64> = [0.0, 0.1, 0.37]
                .iter()
                .map(|&th| {
                    transfer_matrix(a.value(), l, th, e, 3).trace()
                        + 2.0 * l.powi(3) * (6.0 * PI * th).cos()
                })
                .collect();
            for v in &vals {
                assert!((v - vals[0]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interpolant_is_monic_and_matches_direct_value() {
        for a in RationalFrequency::enumerate(12) {
            let p = chambers_polynomial(&a, 0.45).unwrap();
            assert!((p.leading_coefficient() - 1.0).abs() < 1e-9);
            for &e in &[-1.3, 0.1, 0.77] {
                let (direct, _) = chambers_value(&a, 0.45, e);
                assert!((p.eval(e) - direct).abs() < 1e-9 * direct.abs().max(1.0));
            }
        }
    }
}
