//! Candidate filtering, pair scoring and test-aware selection.

use crate::error::{Error, Result};
use crate::lexdiff::{bag_cosine, build_masks, matching_blocks_of, MaskVector, TokenSeq};
use serde::{Deserialize, Serialize};

/// One generated program for a task, with its quality score and how many of
/// the task's essential tests it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub candidate_id: String,
    pub tokens: TokenSeq,
    pub source: String,
    pub quality: f64,
    pub test_passes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    /// Absolute quality gap, on the 0..10 scale.
    pub delta: f64,
    /// delta / 10.
    pub delta_norm: f64,
    pub similarity: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairOutcome {
    Scored(PairScore),
    RejectedDelta { delta: f64 },
    RejectedSimilarity { similarity: f64 },
}

impl PairOutcome {
    pub fn score(self) -> Option<PairScore> {
        match self {
            PairOutcome::Scored(s) => Some(s),
            _ => None,
        }
    }
}

/// Thresholds and weights for pair construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n_samples_per_task: usize,
    /// Minimum quality gap, on the unnormalized 0..10 scale.
    pub delta_min: f64,
    pub similarity_min: f64,
    /// Weight of the normalized quality gap in the combined score.
    pub beta1: f64,
    /// Weight of the similarity term.
    pub beta2: f64,
    pub seed: u64,
    pub max_pairs_per_task: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_samples_per_task: 20,
            delta_min: 1.0,
            similarity_min: 0.4,
            beta1: 0.7,
            beta2: 0.3,
            seed: 0,
            max_pairs_per_task: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples_per_task == 0 {
            return Err(Error::InvalidParameter(
                "n_samples_per_task must be at least 1".to_string(),
            ));
        }
        if !(self.delta_min > 0.0) || !self.delta_min.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta_min must be positive and finite, got {}",
                self.delta_min
            )));
        }
        if !(0.0..1.0).contains(&self.similarity_min) {
            return Err(Error::InvalidParameter(format!(
                "similarity_min must lie in [0, 1), got {}",
                self.similarity_min
            )));
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 || !(self.beta1 + self.beta2).is_finite() {
            return Err(Error::InvalidParameter(
                "beta weights must be non-negative and finite".to_string(),
            ));
        }
        if self.max_pairs_per_task == 0 {
            return Err(Error::InvalidParameter(
                "max_pairs_per_task must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Keeps candidates with strictly positive quality, preserving order.
pub fn filter_candidates(cands: Vec<Candidate>) -> Vec<Candidate> {
    cands.into_iter().filter(|c| c.quality > 0.0).collect()
}

/// Drops later candidates whose token text sequence already appeared.
/// Returns the survivors and the number removed.
pub fn dedup_candidates(cands: Vec<Candidate>) -> (Vec<Candidate>, usize) {
    let mut seen: Vec<Vec<&str>> = Vec::new();
    let mut keep = vec![false; cands.len()];
    for (i, c) in cands.iter().enumerate() {
        let texts = c.tokens.texts();
        if seen.contains(&texts) {
            continue;
        }
        seen.push(texts);
        keep[i] = true;
    }
    let before = cands.len();
    let kept: Vec<Candidate> = cands
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Scores one unordered pair. A pair survives only when the normalized gap
/// and the similarity both strictly exceed their thresholds.
pub fn score_pair(a: &Candidate, b: &Candidate, cfg: &PipelineConfig) -> Result<PairOutcome> {
    let delta = (a.quality - b.quality).abs();
    let delta_norm = delta / 10.0;
    if delta_norm <= cfg.delta_min / 10.0 {
        return Ok(PairOutcome::RejectedDelta { delta });
    }
    let similarity = bag_cosine(&a.tokens, &b.tokens)?;
    if similarity <= cfg.similarity_min {
        return Ok(PairOutcome::RejectedSimilarity { similarity });
    }
    let combined = cfg.beta1 * delta_norm + cfg.beta2 * similarity;
    Ok(PairOutcome::Scored(PairScore {
        delta,
        delta_norm,
        similarity,
        combined,
    }))
}

/// Picks the winning pair: highest combined score among pairs where both
/// sides pass at least one essential test, falling back to the highest
/// combined score outright. Ties break on the sorted candidate-id pair, so
/// the result does not depend on input order.
pub fn select_pair<'a>(
    scored: &[(&'a Candidate, &'a Candidate, PairScore)],
) -> Option<(&'a Candidate, &'a Candidate, PairScore)> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        let (ai, bi, si) = &scored[i];
        let (aj, bj, sj) = &scored[j];
        sj.combined
            .partial_cmp(&si.combined)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| id_key(ai, bi).cmp(&id_key(aj, bj)))
    });
    let best_tested = order
        .iter()
        .copied()
        .find(|&i| scored[i].0.test_passes >= 1 && scored[i].1.test_passes >= 1);
    best_tested.or(order.first().copied()).map(|i| scored[i])
}

fn id_key<'a>(a: &'a Candidate, b: &'a Candidate) -> (&'a str, &'a str) {
    if a.candidate_id <= b.candidate_id {
        (&a.candidate_id, &b.candidate_id)
    } else {
        (&b.candidate_id, &a.candidate_id)
    }
}

/// Token texts, difference masks and scores for one oriented pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedPair {
    pub a_tokens: Vec<String>,
    pub a_mask: MaskVector,
    pub b_tokens: Vec<String>,
    pub b_mask: MaskVector,
    pub a_score: f64,
    pub b_score: f64,
}

/// Orients a pair so the first element is the higher-quality candidate and
/// computes the difference masks over their token sequences.
pub fn orient_pair(task_id: &str, x: &Candidate, y: &Candidate) -> Result<OrientedPair> {
    if x.quality == y.quality {
        return Err(Error::Orientation {
            task_id: task_id.to_string(),
            score: x.quality,
        });
    }
    let (a, b) = if x.quality > y.quality { (x, y) } else { (y, x) };
    let blocks = matching_blocks_of(&a.tokens.texts(), &b.tokens.texts());
    let (a_mask, b_mask) = build_masks(a.tokens.len(), b.tokens.len(), &blocks)?;
    Ok(OrientedPair {
        a_tokens: a.tokens.texts().iter().map(|s| s.to_string()).collect(),
        a_mask,
        b_tokens: b.tokens.texts().iter().map(|s| s.to_string()).collect(),
        b_mask,
        a_score: a.quality,
        b_score: b.quality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexdiff::tokenize;

    fn cand(id: &str, src: &str, quality: f64, test_passes: usize) -> Candidate {
        Candidate {
            candidate_id: id.to_string(),
            tokens: tokenize(src).unwrap(),
            source: src.to_string(),
            quality,
            test_passes,
        }
    }

    #[test]
    fn filter_keeps_strictly_positive() {
        let cands = vec![
            cand("c0", "return a", 0.0, 0),
            cand("c1", "return b", 2.5, 0),
            cand("c2", "return c", 10.0, 0),
        ];
        let kept = filter_candidates(cands);
        let ids: Vec<&str> = kept.iter().map(|c| c.candidate_id.as_str()).collect();
        assert_eq!(ids, vec!["c1", "c2"]);
    }

    #[test]
    fn dedup_drops_identical_token_sequences() {
        let cands = vec![
            cand("c0", "return a", 5.0, 0),
            cand("c1", "return  a  # same tokens", 4.0, 0),
            cand("c2", "return b", 3.0, 0),
        ];
        let (kept, dropped) = dedup_candidates(cands);
        assert_eq!(dropped, 1);
        let ids: Vec<&str> = kept.iter().map(|c| c.candidate_id.as_str()).collect();
        assert_eq!(ids, vec!["c0", "c2"]);
    }

    #[test]
    fn score_pair_hand_example() {
        // identical token multisets -> similarity 1.0
        let a = cand("a", "x = a + b\nreturn x", 7.0, 1);
        let b = cand("b", "x = b + a\nreturn x", 4.0, 1);
        let cfg = PipelineConfig::default();
        match score_pair(&a, &b, &cfg).unwrap() {
            PairOutcome::Scored(s) => {
                assert!((s.delta - 3.0).abs() < 1e-12);
                assert!((s.similarity - 1.0).abs() < 1e-12);
                assert!((s.combined - (0.7 * 0.3 + 0.3 * 1.0)).abs() < 1e-12);
            }
            other => panic!("expected scored pair, got {other:?}"),
        }
    }

    #[test]
    fn thresholds_reject_small_delta_and_low_similarity() {
        let cfg = PipelineConfig::default();
        let a = cand("a", "return a", 5.0, 0);
        let b = cand("b", "return a + b", 4.5, 0);
        assert!(matches!(
            score_pair(&a, &b, &cfg).unwrap(),
            PairOutcome::RejectedDelta { .. }
        ));

        let c = cand("c", "if flag :\nreturn None", 9.0, 0);
        let d = cand("d", "x = 1 + 2 * 10", 4.0, 0);
        assert!(matches!(
            score_pair(&c, &d, &cfg).unwrap(),
            PairOutcome::RejectedSimilarity { .. }
        ));
    }

    #[test]
    fn delta_exactly_at_threshold_is_rejected() {
        let cfg = PipelineConfig::default();
        let a = cand("a", "return a", 5.0, 0);
        let b = cand("b", "return b", 4.0, 0);
        assert!(matches!(
            score_pair(&a, &b, &cfg).unwrap(),
            PairOutcome::RejectedDelta { .. }
        ));
    }

    #[test]
    fn select_prefers_tested_pair_then_falls_back() {
        let a = cand("a", "return a", 9.0, 0);
        let b = cand("b", "return b", 1.0, 0);
        let c = cand("c", "return c", 8.0, 1);
        let d = cand("d", "return d", 2.0, 1);
        let hi = PairScore { delta: 8.0, delta_norm: 0.8, similarity: 1.0, combined: 0.5 };
        let mid = PairScore { combined: 0.4, ..hi };
        let lo = PairScore { combined: 0.3, ..hi };
        let scored = vec![(&a, &b, hi), (&c, &d, mid), (&a, &d, lo)];
        let (x, y, s) = select_pair(&scored).unwrap();
        assert_eq!(x.candidate_id, "c");
        assert_eq!(y.candidate_id, "d");
        assert!((s.combined - 0.4).abs() < 1e-12);

        let untested = vec![(&a, &b, hi), (&a, &b, mid)];
        let (x, _, s) = select_pair(&untested).unwrap();
        assert_eq!(x.candidate_id, "a");
        assert!((s.combined - 0.5).abs() < 1e-12);

        assert!(select_pair(&[]).is_none());
    }

    #[test]
    fn select_is_permutation_invariant() {
        let a = cand("a", "return a", 9.0, 1);
        let b = cand("b", "return b", 1.0, 1);
        let c = cand("c", "return c", 8.0, 1);
        let s = PairScore { delta: 8.0, delta_norm: 0.8, similarity: 1.0, combined: 0.5 };
        let scored = vec![(&a, &b, s), (&a, &c, s), (&b, &c, s)];
        let base = select_pair(&scored).unwrap();
        let perms: Vec<Vec<usize>> = vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ];
        for p in perms {
            let view: Vec<_> = p.iter().map(|&i| scored[i]).collect();
            let got = select_pair(&view).unwrap();
            assert_eq!(got.0.candidate_id, base.0.candidate_id);
            assert_eq!(got.1.candidate_id, base.1.candidate_id);
        }
    }

    #[test]
    fn orientation_puts_higher_quality_first() {
        let hi = cand("hi", "if a <= b :\nreturn b\nreturn a", 7.0, 1);
        let lo = cand("lo", "if a <= b :\nreturn b\nelse :\nreturn a", 3.0, 1);
        let p = orient_pair("t", &lo, &hi).unwrap();
        assert!((p.a_score - 7.0).abs() < 1e-12);
        assert!((p.b_score - 3.0).abs() < 1e-12);
        assert_eq!(p.a_mask.len(), p.a_tokens.len());
        assert_eq!(p.b_mask.len(), p.b_tokens.len());
        // swapped argument order gives the identical result
        let q = orient_pair("t", &hi, &lo).unwrap();
        assert_eq!(p, q);
        // only the inserted else branch differs
        assert!(p.a_mask.all_zero());
        assert_eq!(p.b_mask.count_ones(), 3);
    }

    #[test]
    fn equal_scores_cannot_be_oriented() {
        let a = cand("a", "return a", 5.0, 0);
        let b = cand("b", "return b", 5.0, 0);
        assert!(matches!(
            orient_pair("t", &a, &b),
            Err(Error::Orientation { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig { delta_min: 0.0, ..PipelineConfig::default() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig { similarity_min: 1.0, ..PipelineConfig::default() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig { max_pairs_per_task: 0, ..PipelineConfig::default() };
        assert!(bad.validate().is_err());
    }
}
