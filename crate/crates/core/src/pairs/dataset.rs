//! Dataset records, the per-task build loop and its statistics.

use super::algorithm::{
    dedup_candidates, filter_candidates, orient_pair, score_pair, select_pair, Candidate,
    PairOutcome, PairScore, PipelineConfig,
};
use crate::error::{Error, Result};
use crate::lexdiff::MaskVector;
use crate::model::Vocab;
use crate::tasks::TaskSpec;
use crate::train::EncodedInstance;
use crate::util::{read_jsonl, write_jsonl};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// One training pair, stored as token text so the file stands on its own.
/// Field order here fixes the on-disk field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInstance {
    pub task_id: String,
    pub instruction: String,
    pub a_tokens: Vec<String>,
    pub a_mask: MaskVector,
    pub b_tokens: Vec<String>,
    pub b_mask: MaskVector,
    pub a_score: f64,
    pub b_score: f64,
    pub similarity: f64,
    pub combined: f64,
}

impl DatasetInstance {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(Error::InvalidParameter("instance with empty task_id".to_string()));
        }
        if self.instruction.trim().is_empty() {
            return Err(Error::EmptyInstruction);
        }
        if self.a_tokens.len() != self.a_mask.len() {
            return Err(Error::LengthMismatch {
                what: format!("{}: a_tokens vs a_mask", self.task_id),
                left: self.a_tokens.len(),
                right: self.a_mask.len(),
            });
        }
        if self.b_tokens.len() != self.b_mask.len() {
            return Err(Error::LengthMismatch {
                what: format!("{}: b_tokens vs b_mask", self.task_id),
                left: self.b_tokens.len(),
                right: self.b_mask.len(),
            });
        }
        if !(self.a_score > self.b_score) {
            return Err(Error::Orientation {
                task_id: self.task_id.clone(),
                score: self.a_score,
            });
        }
        for (name, v) in [
            ("a_score", self.a_score),
            ("b_score", self.b_score),
            ("similarity", self.similarity),
            ("combined", self.combined),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("{}.{name}", self.task_id),
                });
            }
        }
        Ok(())
    }

    /// Maps token text to model ids. The instruction is lexed and gets a
    /// leading begin token; both completions get a trailing end token whose
    /// mask bit is 0 so it never counts as a quality difference.
    pub fn encode(&self, vocab: &Vocab) -> Result<EncodedInstance> {
        self.validate()?;
        let mut instr = vec![vocab.bos()];
        instr.extend(vocab.encode_source(&self.instruction)?);
        let encode_side = |tokens: &[String], mask: &MaskVector| -> Result<(Vec<u32>, MaskVector)> {
            let mut ids = vocab.encode_texts(tokens)?;
            ids.push(vocab.eos());
            let mut bits = mask.bits().to_vec();
            bits.push(0);
            Ok((ids, MaskVector::from_bits(bits)?))
        };
        let (a_ids, a_mask) = encode_side(&self.a_tokens, &self.a_mask)?;
        let (b_ids, b_mask) = encode_side(&self.b_tokens, &self.b_mask)?;
        let enc = EncodedInstance {
            instr,
            a_ids,
            a_mask,
            b_ids,
            b_mask,
        };
        enc.validate()?;
        Ok(enc)
    }
}

pub fn write_dataset(path: &Path, instances: &[DatasetInstance]) -> Result<()> {
    write_jsonl(path, instances)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetInstance>> {
    let instances: Vec<DatasetInstance> = read_jsonl(path)?;
    for inst in &instances {
        inst.validate()?;
    }
    Ok(instances)
}

pub fn encode_dataset(instances: &[DatasetInstance], vocab: &Vocab) -> Result<Vec<EncodedInstance>> {
    instances.iter().map(|i| i.encode(vocab)).collect()
}

/// Counts from one dataset build. `task_failures` keeps the error text per
/// failing task; everything else is a running total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetStats {
    pub tasks_attempted: usize,
    pub tasks_with_pairs: usize,
    pub instances: usize,
    pub candidates_total: usize,
    pub dropped_empty: usize,
    pub filtered_zero_quality: usize,
    pub dropped_duplicates: usize,
    pub pairs_scored: usize,
    pub pairs_below_delta: usize,
    pub pairs_below_similarity: usize,
    pub tasks_too_few_candidates: usize,
    pub tasks_no_valid_pair: usize,
    pub task_failures: BTreeMap<String, String>,
}

/// Runs the full pair-construction pipeline over `tasks`.
///
/// `source` supplies scored candidates for one task (typically: sample the
/// model, score with the analyzer, run the task's tests). A failing task is
/// recorded in the statistics and skipped; the build itself never aborts.
/// Tasks are processed in task-id order so the output does not depend on
/// manifest order.
pub fn build_dataset(
    tasks: &[TaskSpec],
    mut source: impl FnMut(&TaskSpec) -> Result<Vec<Candidate>>,
    cfg: &PipelineConfig,
) -> Result<(Vec<DatasetInstance>, DatasetStats)> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by(|&i, &j| tasks[i].task_id.cmp(&tasks[j].task_id));

    let mut out = Vec::new();
    let mut stats = DatasetStats::default();
    for &ti in &order {
        let task = &tasks[ti];
        stats.tasks_attempted += 1;
        let cands = match source(task) {
            Ok(c) => c,
            Err(e) => {
                stats.task_failures.insert(task.task_id.clone(), e.to_string());
                continue;
            }
        };
        stats.candidates_total += cands.len();

        let nonempty: Vec<Candidate> = {
            let before = cands.len();
            let kept: Vec<Candidate> =
                cands.into_iter().filter(|c| !c.tokens.is_empty()).collect();
            stats.dropped_empty += before - kept.len();
            kept
        };
        let positive = {
            let before = nonempty.len();
            let kept = filter_candidates(nonempty);
            stats.filtered_zero_quality += before - kept.len();
            kept
        };
        let (cands, dup) = dedup_candidates(positive);
        stats.dropped_duplicates += dup;
        if cands.len() < 2 {
            stats.tasks_too_few_candidates += 1;
            continue;
        }

        let mut scored: Vec<(&Candidate, &Candidate, PairScore)> = Vec::new();
        let mut scoring_failed = false;
        'pairs: for i in 0..cands.len() {
            for j in i + 1..cands.len() {
                stats.pairs_scored += 1;
                match score_pair(&cands[i], &cands[j], cfg) {
                    Ok(PairOutcome::Scored(s)) => scored.push((&cands[i], &cands[j], s)),
                    Ok(PairOutcome::RejectedDelta { .. }) => stats.pairs_below_delta += 1,
                    Ok(PairOutcome::RejectedSimilarity { .. }) => {
                        stats.pairs_below_similarity += 1
                    }
                    Err(e) => {
                        stats.task_failures.insert(task.task_id.clone(), e.to_string());
                        scoring_failed = true;
                        break 'pairs;
                    }
                }
            }
        }
        if scoring_failed {
            continue;
        }
        if scored.is_empty() {
            stats.tasks_no_valid_pair += 1;
            continue;
        }

        let mut emitted = 0usize;
        while emitted < cfg.max_pairs_per_task {
            let Some((x, y, score)) = select_pair(&scored) else {
                break;
            };
            let oriented = match orient_pair(&task.task_id, x, y) {
                Ok(o) => o,
                Err(e) => {
                    stats.task_failures.insert(task.task_id.clone(), e.to_string());
                    break;
                }
            };
            out.push(DatasetInstance {
                task_id: task.task_id.clone(),
                instruction: task.instruction.clone(),
                a_tokens: oriented.a_tokens,
                a_mask: oriented.a_mask,
                b_tokens: oriented.b_tokens,
                b_mask: oriented.b_mask,
                a_score: oriented.a_score,
                b_score: oriented.b_score,
                similarity: score.similarity,
                combined: score.combined,
            });
            emitted += 1;
            let (used_x, used_y) = (x.candidate_id.clone(), y.candidate_id.clone());
            scored.retain(|(a, b, _)| {
                a.candidate_id != used_x
                    && a.candidate_id != used_y
                    && b.candidate_id != used_x
                    && b.candidate_id != used_y
            });
        }
        if emitted > 0 {
            stats.tasks_with_pairs += 1;
            stats.instances += emitted;
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TaskCategory;
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

    fn task(id: &str) -> TaskSpec {
        TaskSpec {
            task_id: id.to_string(),
            category: TaskCategory::Other,
            instruction: "def f ( a , b ) :".to_string(),
            tests: vec![],
        }
    }

    fn two_good_candidates() -> Vec<Candidate> {
        vec![
            cand("c0", "if a <= b :\nreturn b\nreturn a", 8.0, 1),
            cand("c1", "if a <= b :\nreturn b\nelse :\nreturn a", 4.0, 1),
        ]
    }

    #[test]
    fn two_valid_candidates_give_one_instance() {
        let tasks = vec![task("t0")];
        let (insts, stats) =
            build_dataset(&tasks, |_| Ok(two_good_candidates()), &PipelineConfig::default())
                .unwrap();
        assert_eq!(insts.len(), 1);
        assert_eq!(stats.tasks_with_pairs, 1);
        assert_eq!(stats.instances, 1);
        let inst = &insts[0];
        inst.validate().unwrap();
        assert!(inst.a_score > inst.b_score);
        assert!(inst.similarity > 0.4);
        assert!((inst.a_score - 8.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_scores_yield_no_instance() {
        let tasks = vec![task("t0")];
        let source = |_: &TaskSpec| {
            Ok(vec![
                cand("c0", "return a", 0.0, 0),
                cand("c1", "return b", 0.0, 0),
            ])
        };
        let (insts, stats) =
            build_dataset(&tasks, source, &PipelineConfig::default()).unwrap();
        assert!(insts.is_empty());
        assert_eq!(stats.filtered_zero_quality, 2);
        assert_eq!(stats.tasks_too_few_candidates, 1);
    }

    #[test]
    fn failing_task_is_recorded_not_fatal() {
        let tasks = vec![task("bad"), task("good")];
        let source = |t: &TaskSpec| {
            if t.task_id == "bad" {
                Err(Error::InvalidParameter("generation failed".to_string()))
            } else {
                Ok(two_good_candidates())
            }
        };
        let (insts, stats) =
            build_dataset(&tasks, source, &PipelineConfig::default()).unwrap();
        assert_eq!(insts.len(), 1);
        assert_eq!(insts[0].task_id, "good");
        assert!(stats.task_failures.contains_key("bad"));
    }

    #[test]
    fn output_order_follows_task_id_not_manifest_order() {
        let tasks = vec![task("zz"), task("aa")];
        let (insts, _) =
            build_dataset(&tasks, |_| Ok(two_good_candidates()), &PipelineConfig::default())
                .unwrap();
        let ids: Vec<&str> = insts.iter().map(|i| i.task_id.as_str()).collect();
        assert_eq!(ids, vec!["aa", "zz"]);
    }

    #[test]
    fn max_pairs_selects_disjoint_pairs() {
        let tasks = vec![task("t0")];
        let source = |_: &TaskSpec| {
            Ok(vec![
                cand("c0", "if a <= b :\nreturn b\nreturn a", 9.0, 1),
                cand("c1", "if a <= b :\nreturn b\nelse :\nreturn a", 4.0, 1),
                cand("c2", "if a <= b :\nreturn b\nreturn a + 0", 8.0, 1),
                cand("c3", "if a <= b :\nreturn b\nelse :\nreturn a + 0", 3.0, 1),
            ])
        };
        let cfg = PipelineConfig {
            max_pairs_per_task: 2,
            ..PipelineConfig::default()
        };
        let (insts, stats) = build_dataset(&tasks, source, &cfg).unwrap();
        assert_eq!(insts.len(), 2);
        assert_eq!(stats.instances, 2);
        // the two instances use four distinct candidates
        let mut scores: Vec<f64> = insts.iter().flat_map(|i| [i.a_score, i.b_score]).collect();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(scores, vec![3.0, 4.0, 8.0, 9.0]);
    }

    #[test]
    fn round_trip_preserves_bytes() {
        let tasks = vec![task("t0"), task("t1")];
        let (insts, _) =
            build_dataset(&tasks, |_| Ok(two_good_candidates()), &PipelineConfig::default())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("d1.jsonl");
        let p2 = dir.path().join("d2.jsonl");
        write_dataset(&p1, &insts).unwrap();
        let back = read_dataset(&p1).unwrap();
        assert_eq!(back, insts);
        write_dataset(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn encode_appends_end_token_with_zero_mask() {
        let tasks = vec![task("t0")];
        let (insts, _) =
            build_dataset(&tasks, |_| Ok(two_good_candidates()), &PipelineConfig::default())
                .unwrap();
        let vocab = Vocab::synthetic();
        let enc = insts[0].encode(&vocab).unwrap();
        assert_eq!(enc.instr[0], vocab.bos());
        assert_eq!(*enc.a_ids.last().unwrap(), vocab.eos());
        assert_eq!(*enc.a_mask.bits().last().unwrap(), 0);
        assert_eq!(enc.a_ids.len(), insts[0].a_tokens.len() + 1);
        assert_eq!(enc.b_ids.len(), insts[0].b_tokens.len() + 1);
        enc.validate().unwrap();
    }

    #[test]
    fn instance_validation_rejects_misordered_scores() {
        let tasks = vec![task("t0")];
        let (mut insts, _) =
            build_dataset(&tasks, |_| Ok(two_good_candidates()), &PipelineConfig::default())
                .unwrap();
        let inst = &mut insts[0];
        std::mem::swap(&mut inst.a_score, &mut inst.b_score);
        assert!(inst.validate().is_err());
    }
}
