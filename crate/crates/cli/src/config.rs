//! Run configuration.
//!
//! One TOML document drives every command. Sections mirror the library
//! config types; any field a flag also covers is overridden by the flag.
//! A missing section falls back to its default, but a partially written
//! `[model]` section is rejected because its fields are interdependent.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use prefixtune_core::model::{ModelConfig, Vocab};
use prefixtune_core::pairs::PipelineConfig;
use prefixtune_core::pipeline::GenerationConfig;
use prefixtune_core::quality::{AnalyzerConfig, CheckFilter};
use prefixtune_core::train::{LossWeights, PretrainConfig, TrainConfig};

/// Artifact locations. Everything defaults to a well-known name under
/// `work_dir`; set an entry to relocate a single artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub work_dir: PathBuf,
    pub tasks: Option<PathBuf>,
    pub tasks_train: Option<PathBuf>,
    pub tasks_holdout: Option<PathBuf>,
    pub renders: Option<PathBuf>,
    pub base_checkpoint: Option<PathBuf>,
    pub trainer_checkpoint: Option<PathBuf>,
    pub prefix_checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub dataset_stats: Option<PathBuf>,
    pub pretrain_log: Option<PathBuf>,
    pub train_log: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub baseline_samples: Option<PathBuf>,
    pub evaluation: Option<PathBuf>,
    pub baseline_evaluation: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub scratch: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            work_dir: PathBuf::from("run"),
            tasks: None,
            tasks_train: None,
            tasks_holdout: None,
            renders: None,
            base_checkpoint: None,
            trainer_checkpoint: None,
            prefix_checkpoint: None,
            dataset: None,
            dataset_stats: None,
            pretrain_log: None,
            train_log: None,
            samples: None,
            baseline_samples: None,
            evaluation: None,
            baseline_evaluation: None,
            report: None,
            scratch: None,
        }
    }
}

impl PathsConfig {
    fn under(&self, custom: &Option<PathBuf>, name: &str) -> PathBuf {
        custom.clone().unwrap_or_else(|| self.work_dir.join(name))
    }

    pub fn tasks(&self) -> PathBuf {
        self.under(&self.tasks, "tasks.jsonl")
    }
    pub fn tasks_train(&self) -> PathBuf {
        self.under(&self.tasks_train, "tasks_train.jsonl")
    }
    pub fn tasks_holdout(&self) -> PathBuf {
        self.under(&self.tasks_holdout, "tasks_holdout.jsonl")
    }
    pub fn renders(&self) -> PathBuf {
        self.under(&self.renders, "renders")
    }
    pub fn base_checkpoint(&self) -> PathBuf {
        self.under(&self.base_checkpoint, "base.ckpt")
    }
    pub fn trainer_checkpoint(&self) -> PathBuf {
        self.under(&self.trainer_checkpoint, "trainer.ckpt")
    }
    pub fn prefix_checkpoint(&self) -> PathBuf {
        self.under(&self.prefix_checkpoint, "prefix.ckpt")
    }
    pub fn dataset(&self) -> PathBuf {
        self.under(&self.dataset, "dataset.jsonl")
    }
    pub fn dataset_stats(&self) -> PathBuf {
        self.under(&self.dataset_stats, "dataset_stats.json")
    }
    pub fn pretrain_log(&self) -> PathBuf {
        self.under(&self.pretrain_log, "pretrain_log.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.under(&self.train_log, "train_log.json")
    }
    pub fn samples(&self) -> PathBuf {
        self.under(&self.samples, "samples")
    }
    pub fn baseline_samples(&self) -> PathBuf {
        self.under(&self.baseline_samples, "baseline_samples")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.under(&self.evaluation, "evaluation.json")
    }
    pub fn baseline_evaluation(&self) -> PathBuf {
        self.under(&self.baseline_evaluation, "baseline_evaluation.json")
    }
    pub fn report(&self) -> PathBuf {
        self.under(&self.report, "report.md")
    }
    pub fn scratch(&self) -> PathBuf {
        self.under(&self.scratch, "scratch")
    }
    pub fn train_progress(&self) -> PathBuf {
        self.work_dir.join("train_progress.json")
    }
}

/// Corpus size and holdout split used by `synth`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub n_tasks: usize,
    pub holdout: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            n_tasks: 210,
            holdout: 40,
        }
    }
}

/// Prefix geometry: number of virtual rows and the bottleneck width of the
/// low-rank reparameterization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PrefixSection {
    pub length: usize,
    pub bottleneck: usize,
}

impl Default for PrefixSection {
    fn default() -> Self {
        PrefixSection {
            length: 12,
            bottleneck: 64,
        }
    }
}

/// Which scorer backs `analyze`, `build-dataset`, and `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerSection {
    /// "mock" for the built-in rule engine, "external" to shell out.
    pub mode: String,
    pub program: String,
    pub args: Vec<String>,
    pub timeout_secs: u64,
    pub allowed_exit_codes: Vec<i32>,
    /// Check-id substrings dropped from external reports before scoring.
    pub excluded_checks: Vec<String>,
}

impl Default for AnalyzerSection {
    fn default() -> Self {
        let ext = AnalyzerConfig::default();
        AnalyzerSection {
            mode: "mock".into(),
            program: ext.program,
            args: ext.args,
            timeout_secs: ext.timeout_secs,
            allowed_exit_codes: ext.allowed_exit_codes,
            excluded_checks: CheckFilter::default().excluded_substrings,
        }
    }
}

impl AnalyzerSection {
    pub fn is_mock(&self) -> bool {
        self.mode == "mock"
    }

    pub fn external(&self) -> AnalyzerConfig {
        AnalyzerConfig {
            program: self.program.clone(),
            args: self.args.clone(),
            timeout_secs: self.timeout_secs,
            allowed_exit_codes: self.allowed_exit_codes.clone(),
        }
    }

    pub fn filter(&self) -> CheckFilter {
        CheckFilter {
            excluded_substrings: self.excluded_checks.clone(),
            excluded_ids: Vec::new(),
        }
    }
}

/// Timeout applied to each functional test command.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TestsSection {
    pub timeout_secs: u64,
}

impl Default for TestsSection {
    fn default() -> Self {
        TestsSection { timeout_secs: 10 }
    }
}

/// pass@k cutoffs reported by `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    pub k: Vec<usize>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { k: vec![5, 10] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub skip_basic: bool,
    pub paths: PathsConfig,
    pub experiment: ExperimentSection,
    pub model: ModelConfig,
    pub prefix: PrefixSection,
    pub pretrain: PretrainConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    /// Optional override block; when present it replaces `train.weights`.
    pub weights: Option<LossWeights>,
    pub generation: GenerationConfig,
    pub analyzer: AnalyzerSection,
    pub tests: TestsSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            skip_basic: false,
            paths: PathsConfig::default(),
            experiment: ExperimentSection::default(),
            model: ModelConfig::toy(Vocab::synthetic().len()),
            prefix: PrefixSection::default(),
            pretrain: PretrainConfig::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            weights: None,
            generation: GenerationConfig::default(),
            analyzer: AnalyzerSection::default(),
            tests: TestsSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads the config file (or defaults when absent) and folds the
    /// `weights` override into the training section.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(w) = cfg.weights {
            cfg.train.weights = w;
        }
        Ok(cfg)
    }

    /// Structural validation shared by every command; runs before any
    /// filesystem writes so a bad config leaves no trace behind.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        self.model.validate()?;
        if self.model.vocab != Vocab::synthetic().len() {
            bail!(
                "model.vocab must match the synthetic vocabulary size {}",
                Vocab::synthetic().len()
            );
        }
        if self.prefix.length == 0 || self.prefix.bottleneck == 0 {
            bail!("prefix length and bottleneck must be positive");
        }
        self.pretrain.validate()?;
        self.pipeline.validate()?;
        self.train.validate()?;
        self.generation.validate()?;
        if self.experiment.n_tasks < 2 {
            bail!("experiment.n_tasks must be at least 2");
        }
        if self.experiment.holdout == 0 || self.experiment.holdout >= self.experiment.n_tasks {
            bail!("experiment.holdout must be in 1..n_tasks");
        }
        if !matches!(self.analyzer.mode.as_str(), "mock" | "external") {
            bail!(
                "analyzer.mode must be \"mock\" or \"external\", got {:?}",
                self.analyzer.mode
            );
        }
        if self.analyzer.timeout_secs == 0 {
            bail!("analyzer.timeout_secs must be positive");
        }
        if self.tests.timeout_secs == 0 {
            bail!("tests.timeout_secs must be positive");
        }
        if self.evaluation.k.is_empty() || self.evaluation.k.iter().any(|&k| k == 0) {
            bail!("evaluation.k must list positive cutoffs");
        }
        Ok(())
    }
}
