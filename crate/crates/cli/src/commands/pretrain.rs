//! `pretrain`: fit the base model on every rendered candidate.
//!
//! The base model sees both the clean and the defective render of every
//! task, including held-out ones. Later stages only steer which of the
//! learned styles gets sampled; they never teach the model new tasks.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use prefixtune_core::corpus::{pretrain_sequences, CorpusTask};
use prefixtune_core::model::{BaseParams, Vocab};
use prefixtune_core::tasks::read_manifest;
use prefixtune_core::train::{corpus_nll, train_base};
use prefixtune_core::util::{derive_seed, read_to_string};

use crate::commands::{require_dirs, require_files, write_json};
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Task manifest (defaults to the full manifest under the work dir).
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Directory of per-task candidate renders.
    #[arg(long)]
    pub renders: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(rc: &RunConfig, args: &PretrainArgs) -> Result<()> {
    rc.validate()?;
    let tasks_path = args.tasks.clone().unwrap_or_else(|| rc.paths.tasks());
    let renders = args.renders.clone().unwrap_or_else(|| rc.paths.renders());
    let out = args.out.clone().unwrap_or_else(|| rc.paths.base_checkpoint());
    require_files(&[&tasks_path])?;
    require_dirs(&[&renders])?;

    let tasks = read_manifest(&tasks_path)?;
    if tasks.is_empty() {
        bail!("task manifest {} is empty", tasks_path.display());
    }
    let mut corpus = Vec::with_capacity(tasks.len());
    for task in tasks {
        let dir = renders.join(&task.task_id);
        let high = read_to_string(&dir.join("high.py"))?;
        let low = read_to_string(&dir.join("low.py"))?;
        corpus.push(CorpusTask {
            task,
            high,
            low,
            template: "",
        });
    }

    let _lock = DirLock::acquire(&rc.paths.work_dir)?;
    let vocab = Vocab::synthetic();
    let seqs = pretrain_sequences(&corpus, &vocab)?;
    let mut base = BaseParams::<f64>::init(rc.model, derive_seed(rc.seed, "base-init", 0))?;
    let mut pre_cfg = rc.pretrain;
    pre_cfg.seed = derive_seed(rc.seed, "pretrain", 0);
    let records = train_base(&mut base, &seqs, &pre_cfg)?;
    let nll = corpus_nll(&base, &seqs)?;

    base.to_checkpoint().save(&out)?;
    write_json(&rc.paths.pretrain_log(), &records)?;
    println!(
        "pretrained on {} sequences for {} epochs, final mean nll {nll:.4}, checkpoint {}",
        seqs.len(),
        pre_cfg.epochs,
        out.display()
    );
    Ok(())
}
