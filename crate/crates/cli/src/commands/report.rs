//! `report`: render stored evaluation records as a markdown report.
//!
//! With one record it tabulates quality per category and pass@k. When a
//! baseline record is given (or the default baseline file exists), it adds
//! delta tables in the style of a two-arm comparison.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use prefixtune_core::eval::{issue_frequency_report, IssueDelta, DEFAULT_SAMPLE_CAP};
use prefixtune_core::util::write_string;

use crate::commands::{read_json, require_files, EvaluationRecord};
use crate::config::RunConfig;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation record to render.
    #[arg(long)]
    pub evaluation: Option<PathBuf>,
    /// Baseline record; adds comparison tables.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Output path for the markdown report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(rc: &RunConfig, args: &ReportArgs) -> Result<()> {
    rc.validate()?;
    let eval_path = args.evaluation.clone().unwrap_or_else(|| rc.paths.evaluation());
    let baseline_path = args.baseline.clone().or_else(|| {
        let p = rc.paths.baseline_evaluation();
        p.is_file().then_some(p)
    });
    let out = args.out.clone().unwrap_or_else(|| rc.paths.report());

    require_files(&[&eval_path])?;
    if let Some(b) = &baseline_path {
        require_files(&[b])?;
    }
    let record: EvaluationRecord = read_json(&eval_path)?;
    let baseline: Option<EvaluationRecord> =
        baseline_path.as_deref().map(read_json).transpose()?;

    let mut md = String::from("# Evaluation report\n");
    match &baseline {
        None => render_arm(&mut md, "Samples", &record),
        Some(base) => {
            render_arm(&mut md, "Optimized arm", &record);
            render_arm(&mut md, "Baseline arm", base);
            render_deltas(&mut md, base, &record);
            let deltas = issue_frequency_report(&base.tasks, &record.tasks, DEFAULT_SAMPLE_CAP)?;
            render_issue_md(&mut md, &deltas);
        }
    }

    write_string(&out, &md)?;
    println!("report {}", out.display());
    Ok(())
}

fn render_arm(md: &mut String, title: &str, record: &EvaluationRecord) {
    let _ = writeln!(md, "\n## {title}\n");
    let _ = writeln!(md, "| category | tasks | mean | min | max |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|");
    for (cat, q) in &record.aggregate.per_category {
        let _ = writeln!(
            md,
            "| {cat:?} | {} | {:.4} | {:.4} | {:.4} |",
            q.tasks, q.mean, q.min, q.max
        );
    }
    let o = &record.aggregate.overall;
    let _ = writeln!(
        md,
        "| overall | {} | {:.4} | {:.4} | {:.4} |",
        o.tasks, o.mean, o.min, o.max
    );
    if !record.pass_at_k.is_empty() {
        let _ = writeln!(md, "\n| k | pass@k |");
        let _ = writeln!(md, "|---:|---:|");
        for (k, v) in &record.pass_at_k {
            let _ = writeln!(md, "| {k} | {v:.4} |");
        }
        let _ = writeln!(md, "\n{} tasks carry tests.", record.tasks_with_tests);
    }
}

fn render_deltas(md: &mut String, base: &EvaluationRecord, opt: &EvaluationRecord) {
    let _ = writeln!(md, "\n## Deltas\n");
    let _ = writeln!(md, "| metric | baseline | optimized | delta |");
    let _ = writeln!(md, "|---|---:|---:|---:|");
    let (bm, om) = (base.aggregate.overall.mean, opt.aggregate.overall.mean);
    let _ = writeln!(md, "| mean quality | {bm:.4} | {om:.4} | {:+.4} |", om - bm);
    for (k, ov) in &opt.pass_at_k {
        if let Some(bv) = base.pass_at_k.get(k) {
            let _ = writeln!(
                md,
                "| pass@{k} | {bv:.4} | {ov:.4} | {:+.4} |",
                ov - bv
            );
        }
    }
}

fn render_issue_md(md: &mut String, deltas: &[IssueDelta]) {
    let _ = writeln!(md, "\n## Issue frequency\n");
    let _ = writeln!(
        md,
        "| check | category | baseline | optimized | change | baseline avg | optimized avg |"
    );
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|---:|");
    for d in deltas {
        let _ = writeln!(
            md,
            "| {} | {:?} | {} | {} | {:+} | {:.2} | {:.2} |",
            d.check_id,
            d.category,
            d.baseline_count,
            d.optimized_count,
            d.change,
            d.baseline_avg_score,
            d.optimized_avg_score
        );
    }
}
