//! Bag-of-tokens cosine similarity.

use super::token::TokenSeq;
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::hash::Hash;

/// Cosine similarity between the token-count vectors of `a` and `b`.
///
/// Counts are accumulated as integers so the result does not depend on hash
/// iteration order; the only rounding happens in the final division and
/// square root. An empty sequence has no direction, so either side being
/// empty is an error.
pub fn bag_cosine_of<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter(
            "cosine similarity undefined for an empty token sequence".to_string(),
        ));
    }
    let mut counts: HashMap<&T, (u64, u64)> = HashMap::new();
    for t in a {
        counts.entry(t).or_default().0 += 1;
    }
    for t in b {
        counts.entry(t).or_default().1 += 1;
    }
    let mut dot = 0u64;
    let mut na2 = 0u64;
    let mut nb2 = 0u64;
    for &(ca, cb) in counts.values() {
        dot += ca * cb;
        na2 += ca * ca;
        nb2 += cb * cb;
    }
    Ok(dot as f64 / ((na2 as f64) * (nb2 as f64)).sqrt())
}

/// Similarity over token texts, the form used when scoring candidate pairs.
pub fn bag_cosine(a: &TokenSeq, b: &TokenSeq) -> Result<f64> {
    bag_cosine_of(&a.texts(), &b.texts())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case_is_exact() {
        // counts a: {a:2, b:1}, b: {a:1, b:2} -> 4 / sqrt(5 * 5) = 0.8
        let a = ["a", "a", "b"];
        let b = ["a", "b", "b"];
        assert_eq!(bag_cosine_of(&a, &b).unwrap(), 0.8);
    }

    #[test]
    fn identical_multisets_have_similarity_one() {
        let a = [1, 2, 2, 3];
        assert_eq!(bag_cosine_of(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_multisets_have_similarity_zero() {
        assert_eq!(bag_cosine_of(&[1, 2], &[3, 4]).unwrap(), 0.0);
    }

    #[test]
    fn empty_side_is_an_error() {
        assert!(bag_cosine_of::<u8>(&[], &[1]).is_err());
        assert!(bag_cosine_of::<u8>(&[1], &[]).is_err());
        assert!(bag_cosine_of::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn symmetric() {
        let a = [1, 1, 2, 3, 5];
        let b = [1, 2, 2, 4];
        assert_eq!(
            bag_cosine_of(&a, &b).unwrap(),
            bag_cosine_of(&b, &a).unwrap()
        );
    }

    #[test]
    fn order_insensitive() {
        let a = [3, 1, 2];
        let b = [1, 2, 3];
        assert_eq!(bag_cosine_of(&a, &b).unwrap(), 1.0);
    }
}
