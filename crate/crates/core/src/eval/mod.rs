//! Evaluation harness: pass@k, quality aggregation, issue-frequency deltas.

mod aggregate;
mod issues;
mod passk;
mod types;

pub use aggregate::{aggregate_quality, CategoryQuality, QualityAggregate};
pub use issues::{
    issue_frequency_report, render_issue_csv, render_issue_table, IssueDelta, DEFAULT_SAMPLE_CAP,
};
pub use passk::pass_at_k;
pub use types::{SampleResult, TaskCategory, TaskResult};
