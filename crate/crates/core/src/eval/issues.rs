//! Issue-frequency comparison between two evaluation arms.
//!
//! For each check id, counts occurrences across the first `cap` valid
//! (non-fatal) samples of every task in each arm, and averages the quality
//! score over the programs that contain the issue. Rows sort by category
//! severity, then check id, so reports diff cleanly between runs.

use crate::error::{Error, Result};
use crate::eval::types::TaskResult;
use crate::quality::IssueCategory;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Per-task cap on the number of valid samples counted per arm.
pub const DEFAULT_SAMPLE_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueDelta {
    pub check_id: String,
    pub category: IssueCategory,
    pub baseline_count: u64,
    pub optimized_count: u64,
    /// optimized_count - baseline_count; negative means the issue got rarer.
    pub change: i64,
    /// Mean quality over baseline programs containing the issue, 0.0 if none.
    pub baseline_avg_score: f64,
    pub optimized_avg_score: f64,
}

struct ArmStats {
    counts: BTreeMap<String, (IssueCategory, u64)>,
    /// per check id: (sum of scores, number) over programs containing it
    scores: BTreeMap<String, (f64, u64)>,
}

fn collect_arm(results: &[TaskResult], cap: usize) -> ArmStats {
    let mut counts: BTreeMap<String, (IssueCategory, u64)> = BTreeMap::new();
    let mut scores: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for task in results {
        for sample in task.samples.iter().filter(|s| !s.fatal).take(cap) {
            let mut seen = BTreeSet::new();
            for issue in &sample.issues {
                counts
                    .entry(issue.check_id.clone())
                    .or_insert((issue.category, 0))
                    .1 += 1;
                seen.insert(issue.check_id.clone());
            }
            for id in seen {
                let e = scores.entry(id).or_insert((0.0, 0));
                e.0 += sample.quality;
                e.1 += 1;
            }
        }
    }
    ArmStats { counts, scores }
}

fn avg(scores: &BTreeMap<String, (f64, u64)>, id: &str) -> f64 {
    match scores.get(id) {
        Some(&(sum, n)) if n > 0 => sum / n as f64,
        _ => 0.0,
    }
}

/// Builds the per-check delta table between a baseline arm and an optimized
/// arm. Both arms must cover the same task ids.
pub fn issue_frequency_report(
    baseline: &[TaskResult],
    optimized: &[TaskResult],
    cap: usize,
) -> Result<Vec<IssueDelta>> {
    let base_ids: BTreeSet<&str> = baseline.iter().map(|t| t.task_id.as_str()).collect();
    let opt_ids: BTreeSet<&str> = optimized.iter().map(|t| t.task_id.as_str()).collect();
    if base_ids != opt_ids {
        let only_base: Vec<&str> = base_ids.difference(&opt_ids).copied().take(3).collect();
        let only_opt: Vec<&str> = opt_ids.difference(&base_ids).copied().take(3).collect();
        return Err(Error::TaskAlignment {
            reason: format!(
                "baseline-only tasks {only_base:?}, optimized-only tasks {only_opt:?}"
            ),
        });
    }
    let base = collect_arm(baseline, cap);
    let opt = collect_arm(optimized, cap);

    let mut ids: BTreeMap<String, IssueCategory> = BTreeMap::new();
    for (id, (cat, _)) in base.counts.iter().chain(opt.counts.iter()) {
        ids.entry(id.clone()).or_insert(*cat);
    }
    let mut rows: Vec<IssueDelta> = ids
        .into_iter()
        .map(|(check_id, category)| {
            let b = base.counts.get(&check_id).map_or(0, |v| v.1);
            let o = opt.counts.get(&check_id).map_or(0, |v| v.1);
            IssueDelta {
                baseline_avg_score: avg(&base.scores, &check_id),
                optimized_avg_score: avg(&opt.scores, &check_id),
                change: o as i64 - b as i64,
                baseline_count: b,
                optimized_count: o,
                category,
                check_id,
            }
        })
        .collect();
    rows.sort_by(|a, b| (a.category, &a.check_id).cmp(&(b.category, &b.check_id)));
    Ok(rows)
}

/// Plain-text table of the deltas.
pub fn render_issue_table(rows: &[IssueDelta]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<12} {:>9} {:>10} {:>7} {:>9} {:>9}\n",
        "check", "category", "baseline", "optimized", "change", "base_avg", "opt_avg"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<12} {:>9} {:>10} {:>+7} {:>9.2} {:>9.2}\n",
            r.check_id,
            r.category.name(),
            r.baseline_count,
            r.optimized_count,
            r.change,
            r.baseline_avg_score,
            r.optimized_avg_score
        ));
    }
    out
}

/// CSV form with the same columns and ordering.
pub fn render_issue_csv(rows: &[IssueDelta]) -> String {
    let mut out =
        String::from("check_id,category,baseline_count,optimized_count,change,baseline_avg_score,optimized_avg_score\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.check_id,
            r.category.name(),
            r.baseline_count,
            r.optimized_count,
            r.change,
            r.baseline_avg_score,
            r.optimized_avg_score
        ));
    }
    out
}
