//! End-to-end orchestration: synthetic corpus, base pretraining, contrast
//! dataset, prefix training and held-out evaluation.
//!
//! The command-line tool and the integration tests drive the same functions,
//! so one config plus one seed fully determines every artifact. The master
//! seed fans out to per-stage streams; the seed fields inside the sub-configs
//! are overwritten during `Experiment::prepare`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_corpus, pretrain_sequences, split_holdout, CorpusTask};
use crate::error::{Error, Result};
use crate::eval::{aggregate_quality, QualityAggregate, SampleResult, TaskResult};
use crate::lexdiff::{tokenize, TokenSeq};
use crate::model::{
    generate, BaseParams, ModelConfig, PrefixParams, ReparamState, SampleConfig, Vocab,
};
use crate::pairs::{
    build_dataset, encode_dataset, Candidate, DatasetInstance, DatasetStats, PipelineConfig,
};
use crate::quality::{
    compute_quality_score, mock_analyze, IssueCategory, IssueRecord, MockRule,
};
use crate::tasks::{TaskSpec, TestRunner};
use crate::train::{
    compare_margins, corpus_nll, mean_common_kl, new_optimizer, train_base, train_basic,
    train_comparative, EncodedInstance, MarginComparison, PretrainConfig, TrainConfig,
    TrainSummary,
};
use crate::util::derive_seed;

/// Decoding settings for sampled evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    /// Cap on generated tokens per sample.
    pub max_new: usize,
    /// Samples drawn per task.
    pub n_samples: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 0.4,
            top_p: 0.95,
            max_new: 48,
            n_samples: 20,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_new == 0 || self.n_samples == 0 {
            return Err(Error::InvalidParameter(
                "max_new and n_samples must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn sample_config(&self, eos_id: u32) -> SampleConfig {
        SampleConfig {
            temperature: self.temperature,
            top_p: self.top_p,
            max_new: self.max_new,
            eos_id,
        }
    }
}

/// Settings for a full synthetic run. `Default` is sized so the whole
/// pipeline, sampled evaluation included, finishes in minutes on one core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Synthetic tasks to generate.
    pub n_tasks: usize,
    /// Tasks held out from prefix training; evaluation runs on these.
    pub holdout: usize,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub model: ModelConfig,
    /// Virtual rows prepended per attention layer.
    pub prefix_len: usize,
    /// Width of the factorized prefix parameterization.
    pub bottleneck: usize,
    pub pretrain: PretrainConfig,
    pub pairs: PipelineConfig,
    pub train: TrainConfig,
    /// Skip the single-sequence refinement stage after contrast training.
    pub skip_basic: bool,
    pub generation: GenerationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::toy(Vocab::synthetic().len());
        ExperimentConfig {
            n_tasks: 210,
            holdout: 40,
            seed: 0,
            prefix_len: 12,
            bottleneck: model.hidden,
            model,
            pretrain: PretrainConfig::default(),
            pairs: PipelineConfig::default(),
            train: TrainConfig::default(),
            skip_basic: false,
            generation: GenerationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks < 2 {
            return Err(Error::InvalidParameter(
                "an experiment needs at least two tasks".to_string(),
            ));
        }
        if self.holdout == 0 || self.holdout >= self.n_tasks {
            return Err(Error::InvalidParameter(format!(
                "holdout must lie in 1..n_tasks, got {} of {}",
                self.holdout, self.n_tasks
            )));
        }
        if self.prefix_len == 0 || self.bottleneck == 0 {
            return Err(Error::InvalidParameter(
                "prefix_len and bottleneck must be positive".to_string(),
            ));
        }
        self.model.validate()?;
        if self.model.vocab != Vocab::synthetic().len() {
            return Err(Error::InvalidParameter(format!(
                "model vocab {} does not match the synthetic vocabulary ({})",
                self.model.vocab,
                Vocab::synthetic().len()
            )));
        }
        self.pretrain.validate()?;
        self.pairs.validate()?;
        self.train.validate()?;
        self.generation.validate()
    }
}

/// Scores one candidate program: lex, lint, optionally run the task's tests
/// against a scratch copy. Sources that fail to lex come back with zero
/// quality and no tokens; the dataset builder drops those.
pub fn score_candidate(
    task: &TaskSpec,
    candidate_id: &str,
    source: &str,
    rules: &[MockRule],
    tester: Option<(&TestRunner, &Path)>,
) -> Result<Candidate> {
    let tokens = match tokenize(source) {
        Ok(t) => t,
        Err(_) => {
            return Ok(Candidate {
                candidate_id: candidate_id.to_string(),
                tokens: TokenSeq::new(Vec::new()),
                source: source.to_string(),
                quality: 0.0,
                test_passes: 0,
            })
        }
    };
    let report = mock_analyze(&tokens, rules);
    let quality = compute_quality_score(&report);

    let mut test_passes = 0;
    if let Some((runner, scratch)) = tester {
        if !task.tests.is_empty() {
            let name = format!("{}__{}.py", task.task_id, candidate_id).replace('/', "_");
            let path = scratch.join(name);
            crate::util::write_string(&path, source)?;
            test_passes = runner.run(task, &path)?.essential_passes;
        }
    }

    Ok(Candidate {
        candidate_id: candidate_id.to_string(),
        tokens,
        source: source.to_string(),
        quality,
        test_passes,
    })
}

/// Candidate source that serves the stored clean/defective renders of each
/// task, ids `high` and `low`.
pub fn render_source<'a>(
    corpus: &'a [CorpusTask],
    rules: &'a [MockRule],
    tester: Option<(&'a TestRunner, &'a Path)>,
) -> impl FnMut(&TaskSpec) -> Result<Vec<Candidate>> + 'a {
    let by_id: BTreeMap<&str, &CorpusTask> = corpus
        .iter()
        .map(|t| (t.task.task_id.as_str(), t))
        .collect();
    move |task: &TaskSpec| {
        let entry = by_id
            .get(task.task_id.as_str())
            .ok_or_else(|| Error::TaskAlignment {
                reason: format!("task {} has no stored renders", task.task_id),
            })?;
        Ok(vec![
            score_candidate(task, "high", &entry.high, rules, tester)?,
            score_candidate(task, "low", &entry.low, rules, tester)?,
        ])
    }
}

/// Corpus, pretrained base weights and contrast datasets for both splits;
/// the shared starting point for prefix training and every evaluation.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub vocab: Vocab,
    pub corpus: Vec<CorpusTask>,
    pub train_ids: Vec<usize>,
    pub holdout_ids: Vec<usize>,
    pub base: BaseParams<f64>,
    /// Mean NLL per token over the pretraining corpus, after pretraining.
    pub base_nll: f64,
    pub train_set: Vec<DatasetInstance>,
    pub train_stats: DatasetStats,
    pub holdout_set: Vec<DatasetInstance>,
    pub holdout_stats: DatasetStats,
}

impl Experiment {
    /// Builds the corpus, pretrains the base model on every task's renders
    /// (the base should know all solution styles; the prefix only shifts
    /// which one gets picked), then builds contrast datasets for the train
    /// and held-out splits from the stored renders.
    pub fn prepare(
        cfg: ExperimentConfig,
        rules: &[MockRule],
        tester: Option<(&TestRunner, &Path)>,
    ) -> Result<Experiment> {
        cfg.validate()?;
        let vocab = Vocab::synthetic();
        let corpus = make_corpus(cfg.n_tasks, cfg.seed)?;
        let (train_ids, holdout_ids) = split_holdout(corpus.len(), cfg.holdout, cfg.seed)?;

        let seqs = pretrain_sequences(&corpus, &vocab)?;
        let mut base = BaseParams::init(cfg.model, derive_seed(cfg.seed, "base-init", 0))?;
        let mut pre_cfg = cfg.pretrain;
        pre_cfg.seed = derive_seed(cfg.seed, "pretrain", 0);
        train_base(&mut base, &seqs, &pre_cfg)?;
        let base_nll = corpus_nll(&base, &seqs)?;

        let mut pair_cfg = cfg.pairs;
        pair_cfg.seed = derive_seed(cfg.seed, "pairs", 0);
        let ((train_set, train_stats), (holdout_set, holdout_stats)) = {
            let mut source = render_source(&corpus, rules, tester);
            let pick = |ids: &[usize]| -> Vec<TaskSpec> {
                ids.iter().map(|&i| corpus[i].task.clone()).collect()
            };
            (
                build_dataset(&pick(&train_ids), &mut source, &pair_cfg)?,
                build_dataset(&pick(&holdout_ids), &mut source, &pair_cfg)?,
            )
        };

        Ok(Experiment {
            cfg,
            vocab,
            corpus,
            train_ids,
            holdout_ids,
            base,
            base_nll,
            train_set,
            train_stats,
            holdout_set,
            holdout_stats,
        })
    }

    pub fn train_tasks(&self) -> Vec<&TaskSpec> {
        self.train_ids.iter().map(|&i| &self.corpus[i].task).collect()
    }

    pub fn holdout_tasks(&self) -> Vec<&TaskSpec> {
        self.holdout_ids.iter().map(|&i| &self.corpus[i].task).collect()
    }

    pub fn encoded_train(&self) -> Result<Vec<EncodedInstance>> {
        encode_dataset(&self.train_set, &self.vocab)
    }

    pub fn encoded_holdout(&self) -> Result<Vec<EncodedInstance>> {
        encode_dataset(&self.holdout_set, &self.vocab)
    }

    /// Contrast training, then (unless skipped) the single-sequence
    /// refinement stage on the same pairs. The refinement stage reuses the
    /// step sizes but gets a fresh optimizer: its objective is different, so
    /// stale moments would only mislead it.
    pub fn train_prefix(&self, train: &TrainConfig, skip_basic: bool) -> Result<PrefixOutcome> {
        let data = self.encoded_train()?;
        let mut reparam = ReparamState::init(
            &self.base.cfg,
            self.cfg.prefix_len,
            self.cfg.bottleneck,
            derive_seed(self.cfg.seed, "prefix-init", 0),
        )?;
        let mut stage1 = *train;
        stage1.seed = derive_seed(self.cfg.seed, "contrast", 0);
        let mut opt = new_optimizer(&stage1, &reparam);
        let comparative =
            train_comparative(&self.base, &mut reparam, &mut opt, &data, &stage1, 0, |_, _, _| {
                Ok(())
            })?;

        let basic = if skip_basic {
            None
        } else {
            let mut stage2 = *train;
            stage2.seed = derive_seed(self.cfg.seed, "refine", 0);
            let mut opt2 = new_optimizer(&stage2, &reparam);
            Some(train_basic(
                &self.base,
                &mut reparam,
                &mut opt2,
                &data,
                &stage2,
                0,
                |_, _, _| Ok(()),
            )?)
        };

        let prefix = reparam.materialize(&self.base.cfg)?;
        Ok(PrefixOutcome {
            reparam,
            prefix,
            comparative,
            basic,
        })
    }

    /// Margin comparison over the held-out pairs: prefixed vs. bare model.
    pub fn holdout_margins(&self, prefix: &PrefixParams<f64>) -> Result<MarginComparison> {
        compare_margins(&self.base, prefix, &self.encoded_holdout()?)
    }

    /// Mean per-position divergence from the bare model on unchanged tokens
    /// of the held-out preferred completions.
    pub fn holdout_kl(&self, prefix: &PrefixParams<f64>) -> Result<f64> {
        mean_common_kl(&self.base, prefix, &self.encoded_holdout()?)
    }

    /// Samples and lints completions for every held-out task.
    pub fn holdout_generation(
        &self,
        prefix: Option<&PrefixParams<f64>>,
        rules: &[MockRule],
    ) -> Result<Vec<TaskResult>> {
        generation_eval(
            &self.base,
            prefix,
            &self.holdout_tasks(),
            &self.vocab,
            &self.cfg.generation,
            rules,
            None,
            derive_seed(self.cfg.seed, "gen-eval", 0),
        )
    }
}

/// Trained prefix plus the per-step loss records of both stages.
pub struct PrefixOutcome {
    pub reparam: ReparamState<f64>,
    pub prefix: PrefixParams<f64>,
    pub comparative: TrainSummary,
    pub basic: Option<TrainSummary>,
}

/// Zero-quality result for a sample that produced no usable program.
/// An empty or unlexable completion must not score as a clean one.
pub fn fatal_sample(sample_id: String, message: &str) -> SampleResult {
    SampleResult {
        sample_id,
        quality: 0.0,
        fatal: true,
        passed_all_tests: false,
        issues: vec![IssueRecord {
            check_id: "F0001".to_string(),
            category: IssueCategory::Fatal,
            line: 1,
            column: 1,
            message: message.to_string(),
        }],
    }
}

/// Samples `n_samples` completions per task and lints each one. The draw for
/// (task, index) reuses one seed stream across arms, so comparing prefixed
/// against bare output cancels sampling noise. Empty or unlexable
/// completions count as fatal with zero quality. When a tester is given,
/// each sample is written to the scratch directory and the task's tests run
/// against it.
#[allow(clippy::too_many_arguments)]
pub fn generation_eval(
    base: &BaseParams<f64>,
    prefix: Option<&PrefixParams<f64>>,
    tasks: &[&TaskSpec],
    vocab: &Vocab,
    gen: &GenerationConfig,
    rules: &[MockRule],
    tester: Option<(&TestRunner, &Path)>,
    seed: u64,
) -> Result<Vec<TaskResult>> {
    gen.validate()?;
    let sample_cfg = gen.sample_config(vocab.eos());
    let mut out = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut instr = vec![vocab.bos()];
        instr.extend(vocab.encode_source(&task.instruction)?);
        let mut samples = Vec::with_capacity(gen.n_samples);
        for s in 0..gen.n_samples {
            let sample_id = format!("s{s:02}");
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, &task.task_id, s as u64));
            let ids = generate(base, prefix, &instr, &sample_cfg, &mut rng)?;
            let body: Vec<u32> = ids
                .iter()
                .copied()
                .take_while(|&t| t != vocab.eos())
                .filter(|&t| t != vocab.bos())
                .collect();
            if body.is_empty() {
                samples.push(fatal_sample(sample_id, "empty completion"));
                continue;
            }
            let source = vocab.decode_to_source(&body)?;
            let tokens = match tokenize(&source) {
                Ok(t) => t,
                Err(_) => {
                    samples.push(fatal_sample(sample_id, "completion failed to lex"));
                    continue;
                }
            };
            let report = mock_analyze(&tokens, rules);
            let mut passed_all_tests = false;
            if let Some((runner, scratch)) = tester {
                let name =
                    format!("{}__{sample_id}.py", task.task_id).replace('/', "_");
                let path = scratch.join(name);
                crate::util::write_string(&path, &source)?;
                passed_all_tests = runner.run(task, &path)?.all_passed;
            }
            samples.push(SampleResult {
                sample_id,
                quality: compute_quality_score(&report),
                fatal: report.is_fatal(),
                passed_all_tests,
                issues: report.issues,
            });
        }
        out.push(TaskResult {
            task_id: task.task_id.clone(),
            category: task.category,
            samples,
        });
    }
    Ok(out)
}

/// Headline numbers of one full run; written out as the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tasks: usize,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    pub base_nll: f64,
    pub margins: MarginComparison,
    pub kl_common_mean: f64,
    pub prefixed: QualityAggregate,
    pub baseline: QualityAggregate,
}

/// Everything one full run produces.
pub struct ExperimentRun {
    pub experiment: Experiment,
    pub outcome: PrefixOutcome,
    pub prefixed_results: Vec<TaskResult>,
    pub baseline_results: Vec<TaskResult>,
    pub report: ExperimentReport,
}

/// Runs the whole pipeline: prepare, train the prefix, evaluate margins,
/// divergence and sampled quality on the held-out split.
pub fn run_experiment(
    cfg: ExperimentConfig,
    rules: &[MockRule],
    tester: Option<(&TestRunner, &Path)>,
) -> Result<ExperimentRun> {
    let skip_basic = cfg.skip_basic;
    let train_cfg = cfg.train;
    let experiment = Experiment::prepare(cfg, rules, tester)?;
    let outcome = experiment.train_prefix(&train_cfg, skip_basic)?;

    let margins = experiment.holdout_margins(&outcome.prefix)?;
    let kl_common_mean = experiment.holdout_kl(&outcome.prefix)?;
    let prefixed_results = experiment.holdout_generation(Some(&outcome.prefix), rules)?;
    let baseline_results = experiment.holdout_generation(None, rules)?;

    let report = ExperimentReport {
        tasks: experiment.corpus.len(),
        train_pairs: experiment.train_set.len(),
        holdout_pairs: experiment.holdout_set.len(),
        base_nll: experiment.base_nll,
        margins,
        kl_common_mean,
        prefixed: aggregate_quality(&prefixed_results)?,
        baseline: aggregate_quality(&baseline_results)?,
    };
    Ok(ExperimentRun {
        experiment,
        outcome,
        prefixed_results,
        baseline_results,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::default_rules;
    use crate::tasks::TaskTest;

    fn spec(task_id: &str, tests: Vec<TaskTest>) -> TaskSpec {
        TaskSpec {
            task_id: task_id.to_string(),
            category: Default::default(),
            instruction: "def f ( x ) :\n".to_string(),
            tests,
        }
    }

    #[test]
    fn score_candidate_clean_and_defective() {
        let rules = default_rules();
        let task = spec("t", vec![]);
        let clean = score_candidate(&task, "a", "return x\n", &rules, None).unwrap();
        assert_eq!(clean.quality, 10.0);
        let noisy =
            score_candidate(&task, "b", "if x == True :\nreturn x\n", &rules, None).unwrap();
        assert!(noisy.quality < 10.0);
        assert!(noisy.quality > 0.0);
    }

    #[test]
    fn unlexable_source_scores_zero() {
        let rules = default_rules();
        let task = spec("t", vec![]);
        let c = score_candidate(&task, "a", "def f(x): ~oops~", &rules, None).unwrap();
        assert_eq!(c.quality, 0.0);
        assert!(c.tokens.is_empty());
    }

    #[test]
    fn tester_counts_essential_passes() {
        let rules = default_rules();
        let dir = tempfile::tempdir().unwrap();
        let runner = TestRunner::default();
        let task = spec(
            "t",
            vec![
                TaskTest {
                    cmd: "true".to_string(),
                    essential: true,
                },
                TaskTest {
                    cmd: "false".to_string(),
                    essential: false,
                },
            ],
        );
        let c = score_candidate(
            &task,
            "a",
            "return x\n",
            &rules,
            Some((&runner, dir.path())),
        )
        .unwrap();
        assert_eq!(c.test_passes, 1);
    }

    #[test]
    fn render_source_yields_ordered_quality() {
        let rules = default_rules();
        let corpus = make_corpus(12, 7).unwrap();
        let mut source = render_source(&corpus, &rules, None);
        for t in &corpus {
            let cands = source(&t.task).unwrap();
            assert_eq!(cands.len(), 2);
            assert_eq!(cands[0].candidate_id, "high");
            assert!(cands[0].quality > cands[1].quality);
        }
    }

    #[test]
    fn render_source_rejects_unknown_task() {
        let rules = default_rules();
        let corpus = make_corpus(4, 7).unwrap();
        let mut source = render_source(&corpus, &rules, None);
        assert!(source(&spec("nope", vec![])).is_err());
    }

    #[test]
    fn experiment_config_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.holdout = cfg.n_tasks;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.model.vocab = 8;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.generation.top_p = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn generation_eval_is_deterministic_and_paired() {
        let cfg = ExperimentConfig {
            n_tasks: 6,
            holdout: 2,
            pretrain: PretrainConfig {
                epochs: 1,
                ..Default::default()
            },
            generation: GenerationConfig {
                n_samples: 2,
                max_new: 12,
                ..Default::default()
            },
            ..Default::default()
        };
        let rules = default_rules();
        let exp = Experiment::prepare(cfg, &rules, None).unwrap();
        let a = exp.holdout_generation(None, &rules).unwrap();
        let b = exp.holdout_generation(None, &rules).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|t| t.samples.len() == 2));
    }
}
