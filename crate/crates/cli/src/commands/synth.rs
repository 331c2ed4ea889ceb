//! `synth`: materialize the synthetic task corpus on disk.
//!
//! Writes the full manifest, train/holdout split manifests, and one
//! directory of candidate renders per task (`high.py`, `low.py`). The
//! split and render content depend only on the seed.

use anyhow::Result;
use clap::Args;

use prefixtune_core::corpus::{make_corpus, split_holdout};
use prefixtune_core::tasks::write_manifest;
use prefixtune_core::util::write_string;

use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Total number of tasks (overrides experiment.n_tasks).
    #[arg(long)]
    pub n_tasks: Option<usize>,
    /// Held-out task count (overrides experiment.holdout).
    #[arg(long)]
    pub holdout: Option<usize>,
}

pub fn run(rc: &RunConfig, args: &SynthArgs) -> Result<()> {
    let mut rc = rc.clone();
    if let Some(n) = args.n_tasks {
        rc.experiment.n_tasks = n;
    }
    if let Some(h) = args.holdout {
        rc.experiment.holdout = h;
    }
    rc.validate()?;

    let _lock = DirLock::acquire(&rc.paths.work_dir)?;
    let corpus = make_corpus(rc.experiment.n_tasks, rc.seed)?;
    let (train_ids, holdout_ids) = split_holdout(corpus.len(), rc.experiment.holdout, rc.seed)?;

    let all: Vec<_> = corpus.iter().map(|c| c.task.clone()).collect();
    let train: Vec<_> = train_ids.iter().map(|&i| corpus[i].task.clone()).collect();
    let holdout: Vec<_> = holdout_ids.iter().map(|&i| corpus[i].task.clone()).collect();
    write_manifest(&rc.paths.tasks(), &all)?;
    write_manifest(&rc.paths.tasks_train(), &train)?;
    write_manifest(&rc.paths.tasks_holdout(), &holdout)?;

    let renders = rc.paths.renders();
    for c in &corpus {
        let dir = renders.join(&c.task.task_id);
        std::fs::create_dir_all(&dir)?;
        write_string(&dir.join("high.py"), &c.high)?;
        write_string(&dir.join("low.py"), &c.low)?;
    }

    println!(
        "synthesized {} tasks ({} train, {} holdout) into {}",
        corpus.len(),
        train.len(),
        holdout.len(),
        rc.paths.work_dir.display()
    );
    Ok(())
}
