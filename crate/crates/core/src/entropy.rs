//! Binary entropy and the two-argument entropy function used throughout the
//! leakage bounds. All quantities are in bits.

use crate::error::{Error, Result};

/// Magnitude below which a negative input is treated as rounding dust and
/// clamped to zero.
pub const NEGATIVE_DUST: f64 = 1e-15;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        let v = clean_nonneg("p", value)?;
        if v > 1.0 + NEGATIVE_DUST || v.is_nan() {
            return Err(Error::Domain {
                name: "p",
                value,
                domain: "[0, 1]",
            });
        }
        Ok(Probability(v.min(1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

fn clean_nonneg(name: &'static str, value: f64) -> Result<f64> {
    if value.is_nan() || value < -NEGATIVE_DUST || value.is_infinite() {
        return Err(Error::Domain {
            name,
            value,
            domain: "[0, inf)",
        });
    }
    Ok(value.max(0.0))
}

/// `x log2 x` with the limit convention `0 log2 0 = 0`.
#[inline]
pub fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Binary entropy `h2(p) = -p log2 p - (1-p) log2(1-p)`.
pub fn h2(p: Probability) -> f64 {
    let p = p.value();
    (-xlog2x(p) - xlog2x(1.0 - p)).clamp(0.0, 1.0)
}

/// Binary entropy on a raw `f64`, validating the domain.
pub fn h2_checked(p: f64) -> Result<f64> {
    Ok(h2(Probability::new(p)?))
}

/// `phi(x, y) = -x log2 x - y log2 y + (x + y) log2(x + y)`.
///
/// Equivalently `(x + y) h2(x / (x + y))`; symmetric, jointly concave and
/// positively 1-homogeneous, with `0 <= phi(x, y) <= x + y`.
pub fn phi(x: f64, y: f64) -> Result<f64> {
    let x = clean_nonneg("x", x)?;
    let y = clean_nonneg("y", y)?;
    Ok(phi_unchecked(x, y))
}

/// `phi` for inputs already known to be nonnegative.
#[inline]
pub(crate) fn phi_unchecked(x: f64, y: f64) -> f64 {
    let v = -xlog2x(x) - xlog2x(y) + xlog2x(x + y);
    v.max(0.0)
}

/// Inverse of `h2` on `[0, 1/2]`, by bisection.
pub fn h2_inverse(h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::Domain {
            name: "h",
            value: h,
            domain: "[0, 1]",
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if -xlog2x(mid) - xlog2x(1.0 - mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(p: f64) -> f64 {
        h2_checked(p).unwrap()
    }

    #[test]
    fn h2_reference_points() {
        assert_eq!(h(0.5), 1.0);
        assert_eq!(h(0.0), 0.0);
        assert_eq!(h(1.0), 0.0);
        // -0.25 log2 0.25 - 0.75 log2 0.75
        let direct = 0.5 + 0.75 * (4.0_f64 / 3.0).log2();
        assert!((h(0.25) - direct).abs() < 1e-15);
        assert!((h(0.25) - 0.811_278_124_459_132_9).abs() < 1e-12);
    }

    #[test]
    fn h2_rejects_out_of_range() {
        assert!(h2_checked(-0.1).is_err());
        assert!(h2_checked(1.5).is_err());
        assert!(h2_checked(f64::NAN).is_err());
        // rounding dust is tolerated
        assert_eq!(h2_checked(-1e-17).unwrap(), 0.0);
    }

    #[test]
    fn phi_reference_points() {
        assert_eq!(phi(0.7, 0.0).unwrap(), 0.0);
        assert_eq!(phi(0.0, 0.0).unwrap(), 0.0);
        assert!((phi(0.5, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((phi(3.0, 3.0).unwrap() - 6.0).abs() < 1e-13);
        // (x + y) h2(x / (x + y)) evaluated by hand for (0.8, 0.6)
        let expected = 1.4 * h(0.8 / 1.4);
        assert!((phi(0.8, 0.6).unwrap() - expected).abs() < 1e-14);
        assert!((phi(0.8, 0.6).unwrap() - 1.379_319_390_4).abs() < 1e-9);
    }

    #[test]
    fn phi_rejects_negative() {
        assert!(phi(-0.01, 0.3).is_err());
        assert!(phi(0.3, -1.0).is_err());
        assert!(phi(-1e-16, 0.3).is_ok());
    }

    #[test]
    fn h2_inverse_roundtrip() {
        for &p in &[1e-6, 0.01, 0.0289, 0.11, 0.3] {
            let back = h2_inverse(h(p)).unwrap();
            assert!((back - p).abs() < 1e-9, "{p} -> {back}");
        }
        // h2 is flat at 1/2, so only the forward value is well conditioned there
        assert!((h(h2_inverse(1.0).unwrap()) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn phi_matches_scaled_binary_entropy(x in 1e-9f64..10.0, y in 1e-9f64..10.0) {
            let lhs = phi(x, y).unwrap();
            let rhs = (x + y) * h(x / (x + y));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300) + 1e-14);
        }

        #[test]
        fn phi_symmetric_and_bounded(x in 0.0f64..10.0, y in 0.0f64..10.0) {
            let a = phi(x, y).unwrap();
            prop_assert_eq!(a, phi(y, x).unwrap());
            prop_assert!(a >= 0.0);
            prop_assert!(a <= x + y + 1e-12);
        }

        #[test]
        fn phi_jointly_concave(
            a1 in 0.0f64..5.0, b1 in 0.0f64..5.0,
            a2 in 0.0f64..5.0, b2 in 0.0f64..5.0,
            t in 0.0f64..=1.0,
        ) {
            let mid = phi(t * a1 + (1.0 - t) * a2, t * b1 + (1.0 - t) * b2).unwrap();
            let chord = t * phi(a1, b1).unwrap() + (1.0 - t) * phi(a2, b2).unwrap();
            prop_assert!(mid >= chord - 1e-12);
        }

        #[test]
        fn phi_one_homogeneous(x in 0.0f64..5.0, y in 0.0f64..5.0, c in 1e-3f64..100.0) {
            let lhs = phi(c * x, c * y).unwrap();
            let rhs = c * phi(x, y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + rhs));
        }

        #[test]
        fn phi_saturates_only_on_diagonal(x in 0.01f64..5.0, y in 0.01f64..5.0) {
            let gap = x + y - phi(x, y).unwrap();
            if (x - y).abs() < 1e-12 {
                prop_assert!(gap.abs() < 1e-12);
            } else {
                prop_assert!(gap > 0.0);
            }
        }
    }
}
