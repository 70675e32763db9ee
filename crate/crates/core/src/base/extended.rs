//! Double-double helpers for oracles whose accuracy must exceed `f64`.

use num_complex::Complex;
use twofloat::TwoFloat;

/// `cos(2π m / n)` to double-double accuracy.
///
/// `e^{2πi m/n}` is a simple root of `z^n = 1`, so Newton steps in
/// double-double arithmetic from the `f64` value converge to full accuracy.
/// The trigonometric functions of `twofloat` are only accurate to `f64`
/// level, which is why they are not used here.
pub fn cos_turns(m: u64, n: u64) -> TwoFloat {
    assert!(n > 0, "cos_turns needs a positive denominator");
    let m = m % n;
    let angle = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
    let one = Complex::new(TwoFloat::from(1.0), TwoFloat::from(0.0));
    let mut z = Complex::new(TwoFloat::from(angle.cos()), TwoFloat::from(angle.sin()));
    let nn = Complex::new(TwoFloat::from(n as f64), TwoFloat::from(0.0));
    for _ in 0..3 {
        let w = z.powu(n as u32 - 1);
        z = z - (w * z - one) / (nn * w);
    }
    z.re
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_angles() {
        let close = |x: TwoFloat, y: TwoFloat| (x - y).abs() < TwoFloat::from(1e-30);
        assert!(close(cos_turns(0, 7), TwoFloat::from(1.0)));
        assert!(close(cos_turns(1, 6), TwoFloat::from(0.5)));
        assert!(close(cos_turns(1, 4), TwoFloat::from(0.0)));
        assert!(close(cos_turns(3, 6), TwoFloat::from(-1.0)));
        // cos(π/4)² = 1/2 to double-double accuracy.
        let c = cos_turns(1, 8);
        assert!(close(c * c, TwoFloat::from(0.5)));
    }

    #[test]
    fn agrees_with_f64() {
        for n in 1..40u64 {
            for m in 0..n {
                let want = (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos();
                // The f64 reference carries the rounding of its angle.
                assert!((f64::from(cos_turns(m, n)) - want).abs() < 4e-15);
            }
        }
    }

    #[test]
    fn double_angle_identity() {
        for n in 3..60u64 {
            for m in 0..n {
                let c = cos_turns(m, n);
                let two = TwoFloat::from(2.0);
                let err = (cos_turns(2 * m, n) - (two * c * c - TwoFloat::from(1.0))).abs();
                assert!(err < TwoFloat::from(1e-29), "{m}/{n}: {err:?}");
            }
        }
    }
}
