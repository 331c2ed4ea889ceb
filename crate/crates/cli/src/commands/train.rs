//! `train`: fit the prefix against a built dataset.
//!
//! Two stages run back to back: contrast training on pair margins, then an
//! optional likelihood refinement on the preferred programs (`--skip-basic`
//! drops it). Every epoch checkpoints the reparameterized prefix and the
//! optimizer; an interrupted run resumes from the last finished epoch. The
//! refinement stage starts from a fresh optimizer because its objective
//! differs from the contrast stage.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use prefixtune_core::model::{BaseParams, Checkpoint, Vocab};
use prefixtune_core::pairs::{encode_dataset, read_dataset};
use prefixtune_core::train::{
    load_trainer_state, new_optimizer, save_trainer_state, train_basic, train_comparative,
    TrainSummary,
};
use prefixtune_core::util::derive_seed;
use serde::{Deserialize, Serialize};

use crate::commands::{read_json, require_files, write_json};
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Contrast-pair dataset (defaults to the built one).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Base model checkpoint.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Output path for the materialized prefix.
    #[arg(long)]
    pub prefix_out: Option<PathBuf>,
    /// Ignore any saved trainer state and start from scratch.
    #[arg(long)]
    pub fresh: bool,
}

/// Where an interrupted run stopped; written next to the trainer state
/// after every epoch and removed once training completes.
#[derive(Debug, Serialize, Deserialize)]
struct TrainProgress {
    stage: String,
    epochs_done: usize,
}

#[derive(Debug, Serialize)]
struct TrainLog {
    seed: u64,
    skip_basic: bool,
    resumed: bool,
    contrast: Option<TrainSummary>,
    refine: Option<TrainSummary>,
}

pub fn run(rc: &RunConfig, args: &TrainArgs) -> Result<()> {
    rc.validate()?;
    let dataset_path = args.dataset.clone().unwrap_or_else(|| rc.paths.dataset());
    let base_path = args.base.clone().unwrap_or_else(|| rc.paths.base_checkpoint());
    let prefix_path = args.prefix_out.clone().unwrap_or_else(|| rc.paths.prefix_checkpoint());
    require_files(&[&dataset_path, &base_path])?;

    let instances = read_dataset(&dataset_path)?;
    if instances.is_empty() {
        bail!("dataset {} holds no instances", dataset_path.display());
    }
    let base = BaseParams::<f64>::from_checkpoint(&Checkpoint::load(&base_path)?)?;
    if base.cfg != rc.model {
        bail!(
            "base checkpoint geometry {:?} does not match configured model {:?}",
            base.cfg,
            rc.model
        );
    }
    let vocab = Vocab::synthetic();
    let data = encode_dataset(&instances, &vocab)?;

    let _lock = DirLock::acquire(&rc.paths.work_dir)?;
    let trainer_path = rc.paths.trainer_checkpoint();
    let progress_path = rc.paths.train_progress();
    if args.fresh {
        let _ = std::fs::remove_file(&trainer_path);
        let _ = std::fs::remove_file(&progress_path);
    }

    let mut contrast_cfg = rc.train;
    contrast_cfg.seed = derive_seed(rc.seed, "contrast", 0);
    let mut refine_cfg = rc.train;
    refine_cfg.seed = derive_seed(rc.seed, "refine", 0);

    let resume: Option<TrainProgress> =
        if progress_path.is_file() && trainer_path.is_file() {
            Some(read_json(&progress_path).context("reading training progress")?)
        } else {
            None
        };
    let resumed = resume.is_some();
    let (contrast_start, refine_start) = match &resume {
        None => (0, 0),
        Some(p) if p.stage == "contrast" => (p.epochs_done.min(contrast_cfg.epochs), 0),
        Some(p) if p.stage == "refine" => {
            (contrast_cfg.epochs, p.epochs_done.min(refine_cfg.epochs))
        }
        Some(p) => bail!("unknown training stage {:?} in {}", p.stage, progress_path.display()),
    };

    let resumed_in_refine = matches!(&resume, Some(p) if p.stage == "refine");
    let (mut reparam, mut opt) = if resumed {
        let stage_cfg = if resumed_in_refine { &refine_cfg } else { &contrast_cfg };
        let (r, o) = load_trainer_state(&trainer_path, &base.cfg, stage_cfg.optimizer())?;
        println!(
            "resuming {} stage at epoch {}",
            resume.as_ref().unwrap().stage,
            if resumed_in_refine { refine_start } else { contrast_start }
        );
        (r, o)
    } else {
        let r = prefixtune_core::model::ReparamState::init(
            &base.cfg,
            rc.prefix.length,
            rc.prefix.bottleneck,
            derive_seed(rc.seed, "prefix-init", 0),
        )?;
        let o = new_optimizer(&contrast_cfg, &r);
        (r, o)
    };

    let mut contrast_summary = None;
    if contrast_start < contrast_cfg.epochs {
        let summary = train_comparative(
            &base,
            &mut reparam,
            &mut opt,
            &data,
            &contrast_cfg,
            contrast_start,
            |epoch, r, o| {
                save_trainer_state(&trainer_path, &base.cfg, r, o)?;
                write_progress(&progress_path, "contrast", epoch + 1)
            },
        )?;
        if let Some(last) = summary.records.last() {
            println!(
                "contrast stage: {} steps, final total loss {:.4}",
                summary.records.len(),
                last.total
            );
        }
        contrast_summary = Some(summary);
    }

    let mut refine_summary = None;
    if rc.skip_basic {
        println!("refinement stage skipped");
    } else if refine_start < refine_cfg.epochs {
        let mut refine_opt = if resumed_in_refine {
            opt
        } else {
            new_optimizer(&refine_cfg, &reparam)
        };
        let summary = train_basic(
            &base,
            &mut reparam,
            &mut refine_opt,
            &data,
            &refine_cfg,
            refine_start,
            |epoch, r, o| {
                save_trainer_state(&trainer_path, &base.cfg, r, o)?;
                write_progress(&progress_path, "refine", epoch + 1)
            },
        )?;
        if let Some(last) = summary.records.last() {
            println!(
                "refine stage: {} steps, final loss {:.4}",
                summary.records.len(),
                last.total
            );
        }
        refine_summary = Some(summary);
    }

    let prefix = reparam.materialize(&base.cfg)?;
    prefix.to_checkpoint(&base.cfg).save(&prefix_path)?;
    write_json(
        &rc.paths.train_log(),
        &TrainLog {
            seed: rc.seed,
            skip_basic: rc.skip_basic,
            resumed,
            contrast: contrast_summary,
            refine: refine_summary,
        },
    )?;
    let _ = std::fs::remove_file(&progress_path);
    println!("prefix checkpoint {}", prefix_path.display());
    Ok(())
}

/// Epoch callbacks cross into library code, so this reports failures with
/// the library's error type.
fn write_progress(
    path: &std::path::Path,
    stage: &str,
    epochs_done: usize,
) -> prefixtune_core::Result<()> {
    write_json(
        path,
        &TrainProgress {
            stage: stage.to_string(),
            epochs_done,
        },
    )
    .map_err(|e| prefixtune_core::Error::io(path, std::io::Error::other(e.to_string())))
}
