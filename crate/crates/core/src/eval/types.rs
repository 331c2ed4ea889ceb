//! Evaluation result records.

use crate::quality::IssueRecord;
use serde::{Deserialize, Serialize};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum TaskCategory {
    Introductory,
    Interview,
    Competition,
    #[default]
    Other,
}

impl TaskCategory {
    pub fn parse(s: &str) -> TaskCategory {
        match s.to_ascii_lowercase().as_str() {
            "introductory" => TaskCategory::Introductory,
            "interview" => TaskCategory::Interview,
            "competition" => TaskCategory::Competition,
            _ => TaskCategory::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskCategory::Introductory => "introductory",
            TaskCategory::Interview => "interview",
            TaskCategory::Competition => "competition",
            TaskCategory::Other => "other",
        }
    }
}

/// One scored sample of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub quality: f64,
    pub fatal: bool,
    pub passed_all_tests: bool,
    pub issues: Vec<IssueRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub category: TaskCategory,
    pub samples: Vec<SampleResult>,
}
