//! `generate`: sample completions per task into files.
//!
//! Writes `<out>/<task_id>/s00.py ...` plus a global `index.jsonl`. Each
//! sample's random stream is derived from the seed, the task id, and the
//! sample index only, so a prefixed run and a `--no-prefix` baseline over
//! the same seed draw identical randomness and stay fully paired. A sample
//! that stops without emitting any program token still gets an (empty)
//! file; evaluation scores those as fatal.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prefixtune_core::model::{generate, BaseParams, Checkpoint, PrefixParams, Vocab};
use prefixtune_core::tasks::read_manifest;
use prefixtune_core::util::{derive_seed, write_jsonl, write_string};

use crate::commands::require_files;
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Task manifest (defaults to the holdout split).
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Base model checkpoint.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Prefix checkpoint (ignored with --no-prefix).
    #[arg(long)]
    pub prefix: Option<PathBuf>,
    /// Output directory (defaults to samples/, or baseline_samples/ with
    /// --no-prefix).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Samples per task (overrides generation.n_samples).
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Sampling temperature (overrides generation.temperature).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus mass cutoff (overrides generation.top_p).
    #[arg(long)]
    pub top_p: Option<f64>,
}

#[derive(serde::Serialize)]
struct IndexEntry {
    task_id: String,
    sample_id: String,
    file: String,
    tokens: usize,
    empty: bool,
}

pub fn run(rc: &RunConfig, args: &GenerateArgs, no_prefix: bool) -> Result<()> {
    let mut rc = rc.clone();
    if let Some(n) = args.n_samples {
        rc.generation.n_samples = n;
    }
    if let Some(t) = args.temperature {
        rc.generation.temperature = t;
    }
    if let Some(p) = args.top_p {
        rc.generation.top_p = p;
    }
    rc.validate()?;

    let tasks_path = args.tasks.clone().unwrap_or_else(|| rc.paths.tasks_holdout());
    let base_path = args.base.clone().unwrap_or_else(|| rc.paths.base_checkpoint());
    let prefix_path = args.prefix.clone().unwrap_or_else(|| rc.paths.prefix_checkpoint());
    let out = args.out.clone().unwrap_or_else(|| {
        if no_prefix {
            rc.paths.baseline_samples()
        } else {
            rc.paths.samples()
        }
    });
    let mut needed: Vec<&std::path::Path> = vec![&tasks_path, &base_path];
    if !no_prefix {
        needed.push(&prefix_path);
    }
    require_files(&needed)?;

    let tasks = read_manifest(&tasks_path)?;
    if tasks.is_empty() {
        bail!("task manifest {} is empty", tasks_path.display());
    }
    let base = BaseParams::<f64>::from_checkpoint(&Checkpoint::load(&base_path)?)?;
    if base.cfg != rc.model {
        bail!(
            "base checkpoint geometry {:?} does not match configured model {:?}",
            base.cfg,
            rc.model
        );
    }
    let prefix = if no_prefix {
        None
    } else {
        Some(PrefixParams::<f64>::from_checkpoint(
            &Checkpoint::load(&prefix_path)?,
            &base.cfg,
        )?)
    };

    let _lock = DirLock::acquire(&rc.paths.work_dir)?;
    let vocab = Vocab::synthetic();
    let sample_cfg = rc.generation.sample_config(vocab.eos());
    let gen_seed = derive_seed(rc.seed, "gen-eval", 0);

    let mut index = Vec::new();
    let mut written = 0usize;
    for task in &tasks {
        let mut instr = vec![vocab.bos()];
        instr.extend(vocab.encode_source(&task.instruction)?);
        let dir = out.join(&task.task_id);
        std::fs::create_dir_all(&dir)?;
        for s in 0..rc.generation.n_samples {
            let sample_id = format!("s{s:02}");
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(gen_seed, &task.task_id, s as u64));
            let ids = generate(&base, prefix.as_ref(), &instr, &sample_cfg, &mut rng)?;
            let body: Vec<u32> = ids
                .iter()
                .copied()
                .take_while(|&t| t != vocab.eos())
                .filter(|&t| t != vocab.bos())
                .collect();
            let file = format!("{sample_id}.py");
            let source = if body.is_empty() {
                String::new()
            } else {
                vocab.decode_to_source(&body)?
            };
            write_string(&dir.join(&file), &source)?;
            written += 1;
            index.push(IndexEntry {
                task_id: task.task_id.clone(),
                sample_id,
                file,
                tokens: body.len(),
                empty: body.is_empty(),
            });
        }
    }
    write_jsonl(&out.join("index.jsonl"), &index)?;

    println!(
        "wrote {written} samples for {} tasks into {} ({})",
        tasks.len(),
        out.display(),
        if no_prefix { "no prefix" } else { "prefixed" }
    );
    Ok(())
}
