//! Static-quality analysis: issue records, the quality score, report
//! parsing, a deterministic mock analyzer, and an external analyzer client.

mod external;
mod mock;
mod parse;
mod score;
mod types;

pub use external::{analyze_files, run_external_analyzer, AnalyzerConfig};
pub use mock::{default_rules, mock_analyze, MockRule, PatternAtom};
pub use parse::{parse_analyzer_report, parse_lines};
pub use score::compute_quality_score;
pub use types::{
    apply_check_filter, CategoryCounts, CheckFilter, IssueCategory, IssueRecord, LintReport,
};
