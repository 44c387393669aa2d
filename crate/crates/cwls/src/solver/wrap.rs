//! The rounding and wrapping convention used everywhere in the crate.
//!
//! `round_half_down(n + 0.5) = n` for every integer `n`, which places
//! `wrap(x) = x - round_half_down(x)` in the half-open interval
//! `(-1/2, 1/2]`. This is deliberately not the IEEE round-half-even default:
//! a residual of exactly one half cycle must map to `+1/2`, never `-1/2`,
//! so the convention is implemented explicitly rather than through a library
//! rounding call.

use nalgebra::{DMatrix, DVector};

/// Nearest integer with `round_half_down(n + 0.5) = n`.
#[inline]
pub fn round_half_down(x: f64) -> f64 {
    (x - 0.5).ceil()
}

/// Maps `x` into `(-1/2, 1/2]`; `x - wrap(x)` is an integer.
#[inline]
pub fn wrap(x: f64) -> f64 {
    x - round_half_down(x)
}

/// Elementwise [`wrap`] of a vector.
pub fn wrap_vector(v: &DVector<f64>) -> DVector<f64> {
    v.map(wrap)
}

/// Elementwise [`wrap`] of a matrix.
pub fn wrap_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(wrap)
}

/// Splits a phase matrix into an exact integer part and a fractional part in
/// `(-1/2, 1/2]`.
///
/// The subtraction `x - round_half_down(x)` is exact in f64 (Sterbenz), so
/// `base + frac` reproduces the input bit for bit. Running the solver on the
/// fractional part makes its output invariant under integer shifts of the
/// input phase: the shift moves entirely into `base`.
pub fn split_phase(phase: &DMatrix<f64>) -> (DMatrix<i64>, DMatrix<f64>) {
    let base = phase.map(|x| round_half_down(x) as i64);
    let frac = phase.map(wrap);
    (base, frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_integer_convention() {
        assert_eq!(wrap(0.5), 0.5);
        assert_eq!(wrap(-0.5), 0.5);
        assert_eq!(wrap(1.5), 0.5);
        assert_eq!(wrap(-1.5), 0.5);
        assert_eq!(round_half_down(0.5), 0.0);
        assert_eq!(round_half_down(-0.5), -1.0);
        assert_eq!(round_half_down(2.5), 2.0);
    }

    #[test]
    fn periodicity() {
        assert!((wrap(2.3) - 0.3).abs() < 1e-15);
        assert!((wrap(-2.3) + 0.3).abs() < 1e-15);
        assert_eq!(wrap(7.0), 0.0);
        assert_eq!(wrap(-7.0), 0.0);
    }

    proptest! {
        #[test]
        fn wrap_range_and_integer_remainder(x in -1e6f64..1e6) {
            let w = wrap(x);
            prop_assert!(w > -0.5 && w <= 0.5);
            let n = x - w;
            prop_assert_eq!(n, n.round());
        }

        #[test]
        fn wrap_shift_invariance(x in -100.0f64..100.0, k in -50i64..50) {
            // Exact for inputs on a dyadic grid, where x + k is exact.
            let x = (x * 1024.0).round() / 1024.0;
            prop_assert_eq!(wrap(x + k as f64), wrap(x));
        }

        #[test]
        fn split_is_exact(x in -200.0f64..200.0) {
            let m = DMatrix::from_element(1, 1, x);
            let (base, frac) = split_phase(&m);
            prop_assert_eq!(base[(0, 0)] as f64 + frac[(0, 0)], x);
        }
    }
}
