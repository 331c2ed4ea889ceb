//! Unbiased pass@k estimator.
//!
//! ```text
//! pass@k = 1 - C(n-c, k) / C(n, k)
//! ```
//!
//! evaluated in exact rational arithmetic via the product form
//! `C(n-c,k)/C(n,k) = prod_{i=0..k-1} (n-c-i)/(n-i)`, which never forms the
//! large binomials directly. The single rounding happens when the final
//! rational is converted to f64.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

/// Probability that at least one of `k` draws (without replacement) from
/// `n` samples with `c` correct ones is correct.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "pass@k requires 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    if c > n {
        return Err(Error::InvalidParameter(format!(
            "pass@k requires c <= n, got c={c}, n={n}"
        )));
    }
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        // fewer than k incorrect samples: every k-subset contains a correct one
        return Ok(1.0);
    }
    let mut ratio = BigRational::one();
    for i in 0..k {
        ratio *= BigRational::new(
            BigInt::from((n - c - i) as u64),
            BigInt::from((n - i) as u64),
        );
    }
    Ok(ratio_to_f64(&(BigRational::one() - ratio)))
}

/// Converts an exact nonnegative rational to f64. Both parts are shifted
/// down together when they exceed the f64 range, preserving the ratio to
/// far below f64 precision; small values convert exactly.
fn ratio_to_f64(r: &BigRational) -> f64 {
    debug_assert!(!r.is_negative());
    let nbits = r.numer().bits();
    let dbits = r.denom().bits();
    let shift = nbits.max(dbits).saturating_sub(512);
    if shift == 0 {
        return r.to_f64().unwrap_or(0.0);
    }
    let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
    n / d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        assert_eq!(pass_at_k(2, 1, 1).unwrap(), 0.5);
    }

    #[test]
    fn boundary_cases() {
        assert_eq!(pass_at_k(10, 0, 5).unwrap(), 0.0);
        assert_eq!(pass_at_k(10, 10, 1).unwrap(), 1.0);
        // n - c < k short-circuit
        assert_eq!(pass_at_k(10, 8, 5).unwrap(), 1.0);
        // k == n with any correct sample is certain
        assert_eq!(pass_at_k(7, 1, 7).unwrap(), 1.0);
    }

    #[test]
    fn parameter_errors() {
        assert!(pass_at_k(5, 1, 0).is_err());
        assert!(pass_at_k(5, 1, 6).is_err());
        assert!(pass_at_k(5, 6, 2).is_err());
    }

    #[test]
    fn monotone_in_c_and_k() {
        for c in 0..10 {
            let lo = pass_at_k(10, c, 3).unwrap();
            let hi = pass_at_k(10, c + 1, 3).unwrap();
            assert!(hi >= lo, "pass@k must grow with c: {lo} -> {hi}");
        }
        for k in 1..10 {
            let lo = pass_at_k(10, 3, k).unwrap();
            let hi = pass_at_k(10, 3, k + 1).unwrap();
            assert!(hi >= lo, "pass@k must grow with k: {lo} -> {hi}");
        }
    }

    #[test]
    fn large_inputs_do_not_overflow() {
        let p = pass_at_k(10_000, 37, 5_000).unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(p > 0.999_999, "drawing half of 10k with 37 correct: {p}");
        let tiny = pass_at_k(10_000, 1, 1).unwrap();
        assert!((tiny - 1.0 / 10_000.0).abs() < 1e-18);
    }
}
