//! Issue records, lint reports and check filtering.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Pylint-style issue categories, ordered by severity. The category is the
/// first letter of the check id (`F0001`, `E1101`, `R1705`, `C0121`,
/// `W0612`).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum IssueCategory {
    Fatal,
    Error,
    Refactor,
    Convention,
    Warning,
}

impl IssueCategory {
    pub fn from_check_id(check_id: &str) -> Result<Self> {
        match check_id.chars().next() {
            Some('F') => Ok(IssueCategory::Fatal),
            Some('E') => Ok(IssueCategory::Error),
            Some('R') => Ok(IssueCategory::Refactor),
            Some('C') => Ok(IssueCategory::Convention),
            Some('W') => Ok(IssueCategory::Warning),
            _ => Err(Error::UnknownCategory {
                check_id: check_id.to_string(),
            }),
        }
    }

    pub fn letter(self) -> char {
        match self {
            IssueCategory::Fatal => 'F',
            IssueCategory::Error => 'E',
            IssueCategory::Refactor => 'R',
            IssueCategory::Convention => 'C',
            IssueCategory::Warning => 'W',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IssueCategory::Fatal => "fatal",
            IssueCategory::Error => "error",
            IssueCategory::Refactor => "refactor",
            IssueCategory::Convention => "convention",
            IssueCategory::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub check_id: String,
    pub category: IssueCategory,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

/// One analyzed program: its issues plus the statement count that scales
/// the quality deduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintReport {
    pub issues: Vec<IssueRecord>,
    /// Always at least 1.
    pub statement_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub fatal: u64,
    pub error: u64,
    pub refactor: u64,
    pub convention: u64,
    pub warning: u64,
}

impl LintReport {
    pub fn new(issues: Vec<IssueRecord>, statement_count: usize) -> Self {
        LintReport {
            issues,
            statement_count: statement_count.max(1),
        }
    }

    pub fn counts(&self) -> CategoryCounts {
        let mut c = CategoryCounts::default();
        for issue in &self.issues {
            match issue.category {
                IssueCategory::Fatal => c.fatal += 1,
                IssueCategory::Error => c.error += 1,
                IssueCategory::Refactor => c.refactor += 1,
                IssueCategory::Convention => c.convention += 1,
                IssueCategory::Warning => c.warning += 1,
            }
        }
        c
    }

    pub fn is_fatal(&self) -> bool {
        self.issues
            .iter()
            .any(|i| i.category == IssueCategory::Fatal)
    }
}

/// Which checks to ignore before scoring. Substrings match case-insensitively
/// against the check id and the message text; ids match exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckFilter {
    pub excluded_substrings: Vec<String>,
    pub excluded_ids: Vec<String>,
}

impl Default for CheckFilter {
    /// Excludes pure style noise (whitespace, newline, naming, import order)
    /// so the score tracks code quality rather than formatting.
    fn default() -> Self {
        CheckFilter {
            excluded_substrings: ["whitespace", "newline", "invalid-name", "import"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            excluded_ids: Vec::new(),
        }
    }
}

impl CheckFilter {
    pub fn empty() -> Self {
        CheckFilter {
            excluded_substrings: Vec::new(),
            excluded_ids: Vec::new(),
        }
    }

    pub fn excludes(&self, issue: &IssueRecord) -> bool {
        if self.excluded_ids.iter().any(|id| id == &issue.check_id) {
            return true;
        }
        let id_lower = issue.check_id.to_lowercase();
        let msg_lower = issue.message.to_lowercase();
        self.excluded_substrings.iter().any(|s| {
            let s = s.to_lowercase();
            id_lower.contains(&s) || msg_lower.contains(&s)
        })
    }
}

/// Removes excluded issues; statement count is untouched.
pub fn apply_check_filter(report: &LintReport, filter: &CheckFilter) -> LintReport {
    LintReport {
        issues: report
            .issues
            .iter()
            .filter(|i| !filter.excludes(i))
            .cloned()
            .collect(),
        statement_count: report.statement_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issue(check_id: &str, message: &str) -> IssueRecord {
        IssueRecord {
            check_id: check_id.to_string(),
            category: IssueCategory::from_check_id(check_id).unwrap(),
            line: 1,
            column: 1,
            message: message.to_string(),
        }
    }

    #[test]
    fn category_from_check_id() {
        assert_eq!(
            IssueCategory::from_check_id("R1705").unwrap(),
            IssueCategory::Refactor
        );
        assert!(IssueCategory::from_check_id("X123").is_err());
        assert!(IssueCategory::from_check_id("").is_err());
    }

    #[test]
    fn default_filter_drops_style_noise() {
        let report = LintReport::new(
            vec![
                issue("C0303", "trailing-whitespace: trailing whitespace"),
                issue("C0103", "invalid-name: name does not conform"),
                issue("W0611", "unused-import: unused import os"),
                issue("R1705", "no-else-return: unnecessary else after return"),
            ],
            5,
        );
        let filtered = apply_check_filter(&report, &CheckFilter::default());
        assert_eq!(filtered.issues.len(), 1);
        assert_eq!(filtered.issues[0].check_id, "R1705");
        assert_eq!(filtered.statement_count, 5);
    }

    #[test]
    fn filter_is_idempotent() {
        let report = LintReport::new(
            vec![
                issue("C0303", "trailing whitespace"),
                issue("E1101", "no-member"),
            ],
            3,
        );
        let f = CheckFilter::default();
        let once = apply_check_filter(&report, &f);
        let twice = apply_check_filter(&once, &f);
        assert_eq!(once, twice);
    }

    #[test]
    fn exact_id_exclusion() {
        let f = CheckFilter {
            excluded_substrings: vec![],
            excluded_ids: vec!["E1101".to_string()],
        };
        let report = LintReport::new(vec![issue("E1101", "no-member")], 1);
        assert!(apply_check_filter(&report, &f).issues.is_empty());
    }

    #[test]
    fn statement_count_floor() {
        assert_eq!(LintReport::new(vec![], 0).statement_count, 1);
    }
}
