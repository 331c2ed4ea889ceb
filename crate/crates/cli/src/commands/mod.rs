//! One module per subcommand plus the helpers they share.

pub mod analyze;
pub mod dataset;
pub mod evaluate;
pub mod generate;
pub mod pretrain;
pub mod report;
pub mod synth;
pub mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use prefixtune_core::eval::{QualityAggregate, TaskResult};
use prefixtune_core::lexdiff::tokenize;
use prefixtune_core::quality::{
    apply_check_filter, compute_quality_score, default_rules, mock_analyze, run_external_analyzer,
    AnalyzerConfig, CheckFilter, IssueCategory, IssueRecord, LintReport, MockRule,
};

use crate::config::RunConfig;

/// Scores a source file with whichever analyzer the config selects.
pub enum Scorer {
    Mock(Vec<MockRule>),
    External {
        cfg: AnalyzerConfig,
        filter: CheckFilter,
    },
}

impl Scorer {
    pub fn from_config(rc: &RunConfig) -> Scorer {
        if rc.analyzer.is_mock() {
            Scorer::Mock(default_rules())
        } else {
            Scorer::External {
                cfg: rc.analyzer.external(),
                filter: rc.analyzer.filter(),
            }
        }
    }

    /// Produces the filtered lint report for one file. A file the lexer
    /// rejects comes back as a fatal report rather than an error: broken
    /// input is a legitimate zero-score outcome, not a tooling failure.
    pub fn report_for(&self, path: &Path) -> Result<LintReport> {
        match self {
            Scorer::Mock(rules) => {
                let src = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(report_for_source(&src, rules))
            }
            Scorer::External { cfg, filter } => {
                let report = run_external_analyzer(path, cfg)?;
                Ok(apply_check_filter(&report, filter))
            }
        }
    }
}

/// Mock-analyzes a source string; lex failures become a single fatal issue.
pub fn report_for_source(src: &str, rules: &[MockRule]) -> LintReport {
    match tokenize(src) {
        Ok(tokens) => mock_analyze(&tokens, rules),
        Err(e) => LintReport::new(
            vec![IssueRecord {
                check_id: "F0001".to_string(),
                category: IssueCategory::Fatal,
                line: 1,
                column: 1,
                message: format!("does not lex: {e}"),
            }],
            1,
        ),
    }
}

pub fn score_report(report: &LintReport) -> f64 {
    compute_quality_score(report)
}

/// Output of `evaluate`, consumed again by `report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub seed: u64,
    pub aggregate: QualityAggregate,
    /// Mean pass@k over tasks that define tests; k is clamped to the
    /// sample count of each task.
    pub pass_at_k: BTreeMap<usize, f64>,
    pub tasks_with_tests: usize,
    pub tasks: Vec<TaskResult>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Input existence check run before any command acquires the lock or
/// writes anything.
pub fn require_files(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("missing input file {}", p.display());
        }
    }
    Ok(())
}

pub fn require_dirs(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_dir() {
            bail!("missing input directory {}", p.display());
        }
    }
    Ok(())
}

/// Sorted `.py` files directly inside `dir`.
pub fn sorted_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in
        std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?
    {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "py") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
