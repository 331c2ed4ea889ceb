//! `evaluate`: score sample directories into an evaluation record.
//!
//! Single-arm mode aggregates one directory. Passing `--baseline-dir`
//! evaluates a second arm over the same tasks and prints the quality and
//! issue-frequency deltas between them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;

use prefixtune_core::eval::{
    aggregate_quality, issue_frequency_report, pass_at_k, render_issue_table, SampleResult,
    TaskResult, DEFAULT_SAMPLE_CAP,
};
use prefixtune_core::pipeline::fatal_sample;
use prefixtune_core::tasks::{read_manifest, TaskSpec, TestRunner};

use crate::commands::{
    file_stem, require_dirs, require_files, score_report, sorted_sources, write_json,
    EvaluationRecord, Scorer,
};
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Task manifest (defaults to the holdout split).
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Sample directory to score.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Second sample directory; turns on two-arm comparison.
    #[arg(long)]
    pub baseline_dir: Option<PathBuf>,
    /// Output path for the evaluation record.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output path for the baseline record in two-arm mode.
    #[arg(long)]
    pub baseline_out: Option<PathBuf>,
}

pub fn run(rc: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    rc.validate()?;
    let tasks_path = args.tasks.clone().unwrap_or_else(|| rc.paths.tasks_holdout());
    let samples_dir = args.samples.clone().unwrap_or_else(|| rc.paths.samples());
    let out = args.out.clone().unwrap_or_else(|| rc.paths.evaluation());
    require_files(&[&tasks_path])?;
    require_dirs(&[&samples_dir])?;
    if let Some(b) = &args.baseline_dir {
        require_dirs(&[b])?;
    }
    let tasks = read_manifest(&tasks_path)?;
    if tasks.is_empty() {
        bail!("task manifest {} is empty", tasks_path.display());
    }

    let _lock = DirLock::acquire(&rc.paths.work_dir)?;
    let scorer = Scorer::from_config(rc);
    let runner = TestRunner {
        timeout: Duration::from_secs(rc.tests.timeout_secs),
    };

    let results = score_sample_dir(&tasks, &samples_dir, &scorer, &runner)?;
    let record = evaluation_record(rc.seed, &tasks, results, &rc.evaluation.k)?;
    write_json(&out, &record)?;
    println!("arm {}: {}", samples_dir.display(), summary_line(&record));

    if let Some(baseline_dir) = &args.baseline_dir {
        let baseline_out = args
            .baseline_out
            .clone()
            .unwrap_or_else(|| rc.paths.baseline_evaluation());
        let base_results = score_sample_dir(&tasks, baseline_dir, &scorer, &runner)?;
        let base_record = evaluation_record(rc.seed, &tasks, base_results, &rc.evaluation.k)?;
        write_json(&baseline_out, &base_record)?;
        println!("arm {}: {}", baseline_dir.display(), summary_line(&base_record));
        println!(
            "overall quality delta {:+.4}",
            record.aggregate.overall.mean - base_record.aggregate.overall.mean
        );
        let deltas =
            issue_frequency_report(&base_record.tasks, &record.tasks, DEFAULT_SAMPLE_CAP)?;
        print!("{}", render_issue_table(&deltas));
    }
    Ok(())
}

/// Scores every sample file of every task. Each task must have its
/// directory present; a whitespace-only file counts as a fatal sample.
pub fn score_sample_dir(
    tasks: &[TaskSpec],
    dir: &Path,
    scorer: &Scorer,
    runner: &TestRunner,
) -> Result<Vec<TaskResult>> {
    let mut out = Vec::with_capacity(tasks.len());
    for task in tasks {
        let task_dir = dir.join(&task.task_id);
        if !task_dir.is_dir() {
            bail!(
                "no samples for task {} under {}",
                task.task_id,
                dir.display()
            );
        }
        let mut samples = Vec::new();
        for file in sorted_sources(&task_dir)? {
            let sample_id = file_stem(&file);
            let src = std::fs::read_to_string(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            if src.trim().is_empty() {
                samples.push(fatal_sample(sample_id, "empty completion"));
                continue;
            }
            let report = scorer.report_for(&file)?;
            let mut passed_all_tests = false;
            if !task.tests.is_empty() {
                passed_all_tests = runner.run(task, &file)?.all_passed;
            }
            samples.push(SampleResult {
                sample_id,
                quality: score_report(&report),
                fatal: report.is_fatal(),
                passed_all_tests,
                issues: report.issues,
            });
        }
        if samples.is_empty() {
            bail!("task {} has no sample files", task.task_id);
        }
        out.push(TaskResult {
            task_id: task.task_id.clone(),
            category: task.category,
            samples,
        });
    }
    Ok(out)
}

/// Aggregates quality and unbiased pass@k (k clamped to the per-task sample
/// count; tasks without tests are excluded from pass@k).
pub fn evaluation_record(
    seed: u64,
    tasks: &[TaskSpec],
    results: Vec<TaskResult>,
    ks: &[usize],
) -> Result<EvaluationRecord> {
    let aggregate = aggregate_quality(&results)?;
    let by_id: BTreeMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();

    let mut pass: BTreeMap<usize, f64> = BTreeMap::new();
    let mut tasks_with_tests = 0usize;
    for &k in ks {
        let mut vals = Vec::new();
        for res in &results {
            let spec = by_id.get(res.task_id.as_str());
            if spec.is_none_or(|s| s.tests.is_empty()) || res.samples.is_empty() {
                continue;
            }
            let n = res.samples.len();
            let c = res.samples.iter().filter(|s| s.passed_all_tests).count();
            vals.push(pass_at_k(n, c, k.min(n))?);
        }
        if !vals.is_empty() {
            tasks_with_tests = vals.len();
            pass.insert(k, vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }

    Ok(EvaluationRecord {
        seed,
        aggregate,
        pass_at_k: pass,
        tasks_with_tests,
        tasks: results,
    })
}

fn summary_line(record: &EvaluationRecord) -> String {
    let mut line = format!(
        "{} tasks, mean quality {:.4}",
        record.aggregate.overall.tasks, record.aggregate.overall.mean
    );
    for (k, v) in &record.pass_at_k {
        line.push_str(&format!(", pass@{k} {v:.4}"));
    }
    line
}
