//! Longest-contiguous-match decomposition of two token sequences.
//!
//! Same contract as Python difflib with junk detection disabled: find the
//! longest matching run (ties broken by earliest start in `a`, then earliest
//! start in `b`), recurse on both flanks, and report blocks sorted by
//! position. Minimum match length is 1 and no popularity heuristic is
//! applied, so the result is a pure function of the two sequences.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

/// Matching blocks over any element type with equality.
pub fn matching_blocks_of<T: PartialEq>(a: &[T], b: &[T]) -> Vec<MatchBlock> {
    let mut blocks = Vec::new();
    if a.is_empty() || b.is_empty() {
        return blocks;
    }
    // Run-length buffers indexed by j+1; each window zeroes what it wrote
    // before returning so sibling windows always start clean.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut queue = vec![(0usize, a.len(), 0usize, b.len())];
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let m = find_longest(a, b, alo, ahi, blo, bhi, &mut prev, &mut cur);
        if m.len > 0 {
            queue.push((alo, m.a_start, blo, m.b_start));
            queue.push((m.a_start + m.len, ahi, m.b_start + m.len, bhi));
            blocks.push(m);
        }
    }
    blocks.sort_unstable_by_key(|m| (m.a_start, m.b_start));
    blocks
}

#[allow(clippy::too_many_arguments)]
fn find_longest<T: PartialEq>(
    a: &[T],
    b: &[T],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
    prev: &mut Vec<usize>,
    cur: &mut Vec<usize>,
) -> MatchBlock {
    let mut besti = alo;
    let mut bestj = blo;
    let mut bestsize = 0usize;
    for i in alo..ahi {
        for j in blo..bhi {
            if a[i] == b[j] {
                let k = prev[j] + 1;
                cur[j + 1] = k;
                if k > bestsize {
                    besti = i + 1 - k;
                    bestj = j + 1 - k;
                    bestsize = k;
                }
            }
        }
        std::mem::swap(prev, cur);
        for v in &mut cur[blo + 1..=bhi] {
            *v = 0;
        }
    }
    for v in &mut prev[blo + 1..=bhi] {
        *v = 0;
    }
    MatchBlock {
        a_start: besti,
        b_start: bestj,
        len: bestsize,
    }
}

/// Bit masks over both sequences: 1 where a token lies outside every
/// matching block (a quality difference), 0 where it is shared context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskVector(Vec<u8>);

impl MaskVector {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter(
                "mask bits must be 0 or 1".to_string(),
            ));
        }
        Ok(MaskVector(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn all_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }
}

/// Builds the pair of difference masks implied by `blocks`.
pub fn build_masks(
    a_len: usize,
    b_len: usize,
    blocks: &[MatchBlock],
) -> Result<(MaskVector, MaskVector)> {
    let mut ma = vec![1u8; a_len];
    let mut mb = vec![1u8; b_len];
    for blk in blocks {
        if blk.a_start + blk.len > a_len || blk.b_start + blk.len > b_len {
            return Err(Error::InvalidParameter(format!(
                "matching block {:?} out of bounds for lengths ({a_len}, {b_len})",
                blk
            )));
        }
        for m in &mut ma[blk.a_start..blk.a_start + blk.len] {
            *m = 0;
        }
        for m in &mut mb[blk.b_start..blk.b_start + blk.len] {
            *m = 0;
        }
    }
    Ok((MaskVector(ma), MaskVector(mb)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks_str(a: &[&str], b: &[&str]) -> Vec<MatchBlock> {
        matching_blocks_of(a, b)
    }

    #[test]
    fn worked_example() {
        let a = ["a", "b", "c", "d"];
        let b = ["b", "c", "d", "e"];
        let blocks = blocks_str(&a, &b);
        assert_eq!(
            blocks,
            vec![MatchBlock {
                a_start: 1,
                b_start: 0,
                len: 3
            }]
        );
        let (ma, mb) = build_masks(a.len(), b.len(), &blocks).unwrap();
        assert_eq!(ma.bits(), &[1, 0, 0, 0]);
        assert_eq!(mb.bits(), &[0, 0, 0, 1]);
    }

    #[test]
    fn identical_sequences_are_fully_masked_out() {
        let a = ["x", "y", "z"];
        let blocks = blocks_str(&a, &a);
        assert_eq!(
            blocks,
            vec![MatchBlock {
                a_start: 0,
                b_start: 0,
                len: 3
            }]
        );
        let (ma, mb) = build_masks(3, 3, &blocks).unwrap();
        assert!(ma.all_zero() && mb.all_zero());
    }

    #[test]
    fn disjoint_sequences_have_no_blocks() {
        let blocks = blocks_str(&["a", "b"], &["c", "d"]);
        assert!(blocks.is_empty());
        let (ma, mb) = build_masks(2, 2, &blocks).unwrap();
        assert_eq!(ma.count_ones(), 2);
        assert_eq!(mb.count_ones(), 2);
    }

    #[test]
    fn tie_break_prefers_earliest_a_then_b() {
        // Two maximal runs of length 1: ("x" at a0/b1) and ("y" at a1/b0).
        // Earliest a start wins the first pick.
        let blocks = blocks_str(&["x", "y"], &["y", "x"]);
        assert_eq!(
            blocks[0],
            MatchBlock {
                a_start: 0,
                b_start: 1,
                len: 1
            }
        );
        assert_eq!(blocks.len(), 1, "flanks after the pick cannot match");
    }

    #[test]
    fn empty_inputs() {
        assert!(matching_blocks_of::<u8>(&[], &[1, 2]).is_empty());
        assert!(matching_blocks_of::<u8>(&[1, 2], &[]).is_empty());
    }

    #[test]
    fn out_of_bounds_block_is_rejected() {
        let blk = MatchBlock {
            a_start: 0,
            b_start: 0,
            len: 2,
        };
        assert!(build_masks(2, 2, &[blk]).is_ok());
        assert!(build_masks(2, 1, &[blk]).is_err());
    }
}
