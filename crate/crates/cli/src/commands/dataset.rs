//! `build-dataset`: turn per-task candidate files into contrast pairs.
//!
//! Candidates live one directory per task, named `<dir>/<task_id>/*.py`;
//! the file stem becomes the candidate id. Reruns over the same inputs
//! write byte-identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Result;
use clap::Args;

use prefixtune_core::lexdiff::{tokenize, TokenSeq};
use prefixtune_core::pairs::{build_dataset, write_dataset, Candidate};
use prefixtune_core::pipeline::score_candidate;
use prefixtune_core::quality::{
    apply_check_filter, compute_quality_score, run_external_analyzer, AnalyzerConfig, CheckFilter,
};
use prefixtune_core::tasks::{read_manifest, TaskSpec, TestRunner};
use prefixtune_core::util::{derive_seed, read_to_string};

use crate::commands::{file_stem, require_dirs, require_files, sorted_sources, write_json, Scorer};
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Task manifest (defaults to the training split).
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Directory of per-task candidate programs.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Output dataset path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output path for yield statistics.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

pub fn run(rc: &RunConfig, args: &BuildDatasetArgs) -> Result<()> {
    rc.validate()?;
    let tasks_path = args.tasks.clone().unwrap_or_else(|| rc.paths.tasks_train());
    let candidates = args.candidates.clone().unwrap_or_else(|| rc.paths.renders());
    let out = args.out.clone().unwrap_or_else(|| rc.paths.dataset());
    let stats_out = args.stats_out.clone().unwrap_or_else(|| rc.paths.dataset_stats());

    require_files(&[&tasks_path])?;
    let tasks = read_manifest(&tasks_path)?;
    if tasks.is_empty() {
        eprintln!(
            "warning: task manifest {} is empty; writing an empty dataset",
            tasks_path.display()
        );
    } else {
        require_dirs(&[&candidates])?;
    }

    let _lock = DirLock::acquire(&rc.paths.work_dir)?;
    let listing = candidate_listing(&tasks, &candidates)?;
    let scorer = Scorer::from_config(rc);
    let runner = TestRunner {
        timeout: Duration::from_secs(rc.tests.timeout_secs),
    };
    let scratch = rc.paths.scratch();
    std::fs::create_dir_all(&scratch)?;

    let mut source = |task: &TaskSpec| -> prefixtune_core::Result<Vec<Candidate>> {
        let Some(files) = listing.get(task.task_id.as_str()) else {
            return Ok(Vec::new());
        };
        let mut cands = Vec::with_capacity(files.len());
        for (id, path) in files {
            let cand = match &scorer {
                Scorer::Mock(rules) => {
                    let src = read_to_string(path)?;
                    score_candidate(task, id, &src, rules, Some((&runner, &scratch)))?
                }
                Scorer::External { cfg, filter } => {
                    external_candidate(task, id, path, cfg, filter, &runner)?
                }
            };
            cands.push(cand);
        }
        Ok(cands)
    };

    let mut pair_cfg = rc.pipeline;
    pair_cfg.seed = derive_seed(rc.seed, "pairs", 0);
    let (instances, stats) = build_dataset(&tasks, &mut source, &pair_cfg)?;
    write_dataset(&out, &instances)?;
    write_json(&stats_out, &stats)?;

    println!(
        "tasks {} | with pairs {} | instances {}",
        stats.tasks_attempted, stats.tasks_with_pairs, stats.instances
    );
    println!(
        "candidates {} | unlexable {} | zero quality {} | duplicates {}",
        stats.candidates_total,
        stats.dropped_empty,
        stats.filtered_zero_quality,
        stats.dropped_duplicates
    );
    println!(
        "pairs scored {} | below quality gap {} | below similarity {} | tasks too few candidates {} | tasks no valid pair {}",
        stats.pairs_scored,
        stats.pairs_below_delta,
        stats.pairs_below_similarity,
        stats.tasks_too_few_candidates,
        stats.tasks_no_valid_pair
    );
    println!("dataset {}", out.display());
    Ok(())
}

/// Walks the candidate directory once up front so the scoring closure only
/// touches files; listing order is the sorted file order.
fn candidate_listing(
    tasks: &[TaskSpec],
    dir: &Path,
) -> Result<BTreeMap<String, Vec<(String, PathBuf)>>> {
    let mut map = BTreeMap::new();
    for task in tasks {
        let task_dir = dir.join(&task.task_id);
        if !task_dir.is_dir() {
            continue;
        }
        let files: Vec<(String, PathBuf)> = sorted_sources(&task_dir)?
            .into_iter()
            .map(|p| (file_stem(&p), p))
            .collect();
        map.insert(task.task_id.clone(), files);
    }
    Ok(map)
}

/// Candidate scored by the external analyzer; tokens still come from the
/// built-in lexer because pair similarity is lexical.
fn external_candidate(
    task: &TaskSpec,
    candidate_id: &str,
    path: &Path,
    cfg: &AnalyzerConfig,
    filter: &CheckFilter,
    runner: &TestRunner,
) -> prefixtune_core::Result<Candidate> {
    let source = read_to_string(path)?;
    let tokens = match tokenize(&source) {
        Ok(t) => t,
        Err(_) => {
            return Ok(Candidate {
                candidate_id: candidate_id.to_string(),
                tokens: TokenSeq::new(Vec::new()),
                source,
                quality: 0.0,
                test_passes: 0,
            })
        }
    };
    let report = apply_check_filter(&run_external_analyzer(path, cfg)?, filter);
    let quality = compute_quality_score(&report);
    let mut test_passes = 0;
    if !task.tests.is_empty() {
        test_passes = runner.run(task, path)?.essential_passes;
    }
    Ok(Candidate {
        candidate_id: candidate_id.to_string(),
        tokens,
        source,
        quality,
        test_passes,
    })
}
