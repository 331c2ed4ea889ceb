//! Mean/Max/Min quality aggregation across tasks.
//!
//! Per task, the sample qualities collapse to (mean, max, min); per
//! category, those statistics average across tasks. This mirrors how
//! quality is reported per difficulty bucket: Mean tracks expected quality,
//! Max the best sample, Min the worst.

use crate::error::{Error, Result};
use crate::eval::types::{TaskCategory, TaskResult};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryQuality {
    pub tasks: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAggregate {
    pub per_category: BTreeMap<TaskCategory, CategoryQuality>,
    pub overall: CategoryQuality,
}

struct TaskStats {
    mean: f64,
    max: f64,
    min: f64,
}

fn task_stats(task: &TaskResult) -> Result<TaskStats> {
    if task.samples.is_empty() {
        return Err(Error::TaskAlignment {
            reason: format!("task {} has no samples", task.task_id),
        });
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for s in &task.samples {
        sum += s.quality;
        max = max.max(s.quality);
        min = min.min(s.quality);
    }
    Ok(TaskStats {
        mean: sum / task.samples.len() as f64,
        max,
        min,
    })
}

fn average(stats: &[TaskStats]) -> CategoryQuality {
    let n = stats.len() as f64;
    CategoryQuality {
        tasks: stats.len(),
        mean: stats.iter().map(|s| s.mean).sum::<f64>() / n,
        max: stats.iter().map(|s| s.max).sum::<f64>() / n,
        min: stats.iter().map(|s| s.min).sum::<f64>() / n,
    }
}

/// Aggregates per-task quality into per-category and overall statistics.
/// Categories with no tasks are simply absent from the map.
pub fn aggregate_quality(results: &[TaskResult]) -> Result<QualityAggregate> {
    if results.is_empty() {
        return Err(Error::TaskAlignment {
            reason: "no task results to aggregate".to_string(),
        });
    }
    let mut by_cat: BTreeMap<TaskCategory, Vec<TaskStats>> = BTreeMap::new();
    let mut all = Vec::with_capacity(results.len());
    for task in results {
        let stats = task_stats(task)?;
        by_cat.entry(task.category).or_default().push(TaskStats {
            mean: stats.mean,
            max: stats.max,
            min: stats.min,
        });
        all.push(stats);
    }
    Ok(QualityAggregate {
        per_category: by_cat
            .into_iter()
            .map(|(cat, stats)| (cat, average(&stats)))
            .collect(),
        overall: average(&all),
    })
}
