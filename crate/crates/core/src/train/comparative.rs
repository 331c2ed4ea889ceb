//! Comparative prefix training: optimizes the reparameterized prefix on
//! preference pairs while the base model stays frozen.

use crate::error::{Error, Result};
use crate::model::{BaseParams, Checkpoint, CheckpointMeta, ModelConfig, PrefixParams, ReparamState};
use crate::scalar::{c, Scalar};
use crate::train::adamw::{AdamW, AdamWConfig};
use crate::train::losses::{
    common_kl_stats, instance_loss, instance_loss_and_grads, instance_margin, EncodedInstance,
    KlScope,
    LossWeights,
};
use crate::util::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub kl_scope: KlScope,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 3,
            clip_norm: 1.0,
            seed: 0,
            batch_size: 1,
            kl_scope: KlScope::default(),
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch size must be at least 1".to_string(),
            ));
        }
        if self.weights.lm < 0.0 || self.weights.rank < 0.0 || self.weights.kl < 0.0 {
            return Err(Error::InvalidParameter(
                "loss weights must be non-negative".to_string(),
            ));
        }
        if self.weights.lm == 0.0 && self.weights.rank == 0.0 && self.weights.kl == 0.0 {
            return Err(Error::InvalidParameter(
                "at least one loss weight must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            clip_norm: Some(self.clip_norm),
            ..Default::default()
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub epoch: usize,
    pub lm: f64,
    pub rank: f64,
    pub kl: f64,
    pub total: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub records: Vec<TrainRecord>,
    /// Instances skipped because both masks were all zero.
    pub skipped: usize,
}

pub fn new_optimizer<T: Scalar>(cfg: &TrainConfig, reparam: &ReparamState<T>) -> AdamW<T> {
    let lens: Vec<usize> = reparam.flat().iter().map(|s| s.len()).collect();
    AdamW::new(cfg.optimizer(), &lens)
}

/// Indices of instances that carry a masked-score signal.
fn trainable_indices(data: &[EncodedInstance]) -> (Vec<usize>, usize) {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].trainable()).collect();
    let skipped = data.len() - idx.len();
    (idx, skipped)
}

/// Runs `cfg.epochs - start_epoch` epochs of comparative training,
/// mutating `reparam` and `opt` in place. The per-epoch shuffle is derived
/// from `(cfg.seed, epoch)`, so a run resumed from a checkpoint at an epoch
/// boundary continues exactly as the uninterrupted run would.
pub fn train_comparative<T: Scalar>(
    base: &BaseParams<T>,
    reparam: &mut ReparamState<T>,
    opt: &mut AdamW<T>,
    data: &[EncodedInstance],
    cfg: &TrainConfig,
    start_epoch: usize,
    mut on_epoch: impl FnMut(usize, &ReparamState<T>, &AdamW<T>) -> Result<()>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let (idx, skipped) = trainable_indices(data);
    if idx.is_empty() {
        return Err(Error::InvalidParameter(
            "no trainable instances in dataset".to_string(),
        ));
    }
    let mut records = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let mut order = idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "epoch-shuffle", epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let prefix = reparam.materialize(&base.cfg)?;
            let mut acc = PrefixParams::<T>::zeros(&base.cfg, prefix.m_len);
            let mut sums = [0.0f64; 4];
            for &i in batch {
                let (bd, pg) = instance_loss_and_grads(
                    base,
                    &prefix,
                    &data[i],
                    &cfg.weights,
                    cfg.kl_scope,
                )
                .map_err(|e| decorate(e, opt.step_count() + 1, epoch, i))?;
                sums[0] += bd.lm;
                sums[1] += bd.rank;
                sums[2] += bd.kl;
                sums[3] += bd.total;
                for (x, y) in acc.keys.iter_mut().zip(&pg.keys) {
                    *x += y;
                }
                for (x, y) in acc.values.iter_mut().zip(&pg.values) {
                    *x += y;
                }
            }
            let n = batch.len() as f64;
            let inv = c::<T>(1.0 / n);
            for a in acc.keys.iter_mut().chain(acc.values.iter_mut()) {
                a.mapv_inplace(|x| x * inv);
            }
            let chained = reparam.grads_from_prefix(&base.cfg, &acc)?;
            let grad_norm = opt.step(reparam.flat_mut(), &chained.flat())?;
            records.push(TrainRecord {
                step: opt.step_count(),
                epoch,
                lm: sums[0] / n,
                rank: sums[1] / n,
                kl: sums[2] / n,
                total: sums[3] / n,
                grad_norm,
            });
        }
        on_epoch(epoch, reparam, opt)?;
    }
    Ok(TrainSummary { records, skipped })
}

fn decorate(e: Error, step: u64, epoch: usize, instance: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{context} (step {step}, epoch {epoch}, instance {instance})"),
        },
        other => other,
    }
}

/// Mean losses and preference statistics over a dataset, no gradients.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetEval {
    pub count: usize,
    pub skipped: usize,
    pub lm: f64,
    pub rank: f64,
    pub kl: f64,
    pub total: f64,
    pub mean_margin: f64,
    /// Fraction of pairs whose preferred completion scores strictly higher.
    pub margin_win_rate: f64,
}

pub fn evaluate_pairs<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    data: &[EncodedInstance],
    weights: &LossWeights,
    scope: KlScope,
) -> Result<DatasetEval> {
    let (idx, skipped) = trainable_indices(data);
    if idx.is_empty() {
        return Err(Error::InvalidParameter(
            "no trainable instances to evaluate".to_string(),
        ));
    }
    let mut sums = [0.0f64; 4];
    let mut margin_sum = 0.0;
    let mut wins = 0usize;
    for &i in &idx {
        let bd = instance_loss(base, prefix, &data[i], weights, scope)?;
        sums[0] += bd.lm;
        sums[1] += bd.rank;
        sums[2] += bd.kl;
        sums[3] += bd.total;
        let margin = instance_margin(base, Some(prefix), &data[i])?;
        margin_sum += margin;
        if margin > 0.0 {
            wins += 1;
        }
    }
    let n = idx.len() as f64;
    Ok(DatasetEval {
        count: idx.len(),
        skipped,
        lm: sums[0] / n,
        rank: sums[1] / n,
        kl: sums[2] / n,
        total: sums[3] / n,
        mean_margin: margin_sum / n,
        margin_win_rate: wins as f64 / n,
    })
}

/// Preference margins with and without the prefix, pair by pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarginComparison {
    pub count: usize,
    pub skipped: usize,
    /// Pairs where the prefixed margin strictly exceeds the bare-model margin.
    pub improved: usize,
    pub improvement_rate: f64,
    pub mean_prefixed: f64,
    pub mean_plain: f64,
}

pub fn compare_margins<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    data: &[EncodedInstance],
) -> Result<MarginComparison> {
    let (idx, skipped) = trainable_indices(data);
    if idx.is_empty() {
        return Err(Error::InvalidParameter(
            "no trainable instances to compare".to_string(),
        ));
    }
    let mut improved = 0usize;
    let mut sum_pref = 0.0;
    let mut sum_plain = 0.0;
    for &i in &idx {
        let with = instance_margin(base, Some(prefix), &data[i])?;
        let without = instance_margin(base, None, &data[i])?;
        sum_pref += with;
        sum_plain += without;
        if with > without {
            improved += 1;
        }
    }
    let n = idx.len() as f64;
    Ok(MarginComparison {
        count: idx.len(),
        skipped,
        improved,
        improvement_rate: improved as f64 / n,
        mean_prefixed: sum_pref / n,
        mean_plain: sum_plain / n,
    })
}

/// Mean per-position KL(prefixed || base) over common tokens of the
/// preferred completions. Zero when no common positions exist.
pub fn mean_common_kl<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    data: &[EncodedInstance],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for inst in data {
        let (sum, n) = common_kl_stats(base, prefix, inst)?;
        total += sum;
        count += n;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64)
}

const STATE_ARRAYS: [&str; 2] = ["h_prime", "w"];

/// Writes the reparameterized prefix plus optimizer moments, enabling an
/// exact resume at an epoch boundary.
pub fn save_trainer_state<T: Scalar>(
    path: &Path,
    model_cfg: &ModelConfig,
    reparam: &ReparamState<T>,
    opt: &AdamW<T>,
) -> Result<()> {
    let mut ck = Checkpoint::new(CheckpointMeta {
        cfg: *model_cfg,
        m_len: reparam.m_len(),
        bottleneck: reparam.bottleneck(),
    });
    ck.push("h_prime", reparam.h_prime.mapv(|x| x.to_f64()).into_dyn());
    ck.push("w", reparam.w.mapv(|x| x.to_f64()).into_dyn());
    let (m, v, step) = opt.state();
    for (i, name) in STATE_ARRAYS.iter().enumerate() {
        ck.push(
            format!("opt.m.{name}"),
            ndarray::Array1::from_iter(m[i].iter().map(|&x| x.to_f64())).into_dyn(),
        );
        ck.push(
            format!("opt.v.{name}"),
            ndarray::Array1::from_iter(v[i].iter().map(|&x| x.to_f64())).into_dyn(),
        );
    }
    ck.push(
        "opt.step",
        ndarray::Array1::from_vec(vec![step as f64]).into_dyn(),
    );
    ck.save(path)
}

pub fn load_trainer_state<T: Scalar>(
    path: &Path,
    expected_cfg: &ModelConfig,
    opt_cfg: AdamWConfig,
) -> Result<(ReparamState<T>, AdamW<T>)> {
    let ck = Checkpoint::load(path)?;
    if ck.meta.cfg != *expected_cfg {
        return Err(Error::checkpoint(
            path,
            format!(
                "trainer state is for geometry {:?}, model is {:?}",
                ck.meta.cfg, expected_cfg
            ),
        ));
    }
    let m_len = ck.meta.m_len;
    let bn = ck.meta.bottleneck;
    let h_prime = crate::model::checkpoint_a2::<T>(&ck, "h_prime", m_len, bn)?;
    let w = crate::model::checkpoint_a2::<T>(&ck, "w", bn, expected_cfg.prefix_dim())?;
    let reparam = ReparamState { h_prime, w };
    let lens: Vec<usize> = reparam.flat().iter().map(|s| s.len()).collect();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (i, name) in STATE_ARRAYS.iter().enumerate() {
        m.push(
            crate::model::checkpoint_a1::<T>(&ck, &format!("opt.m.{name}"), lens[i])?.to_vec(),
        );
        v.push(
            crate::model::checkpoint_a1::<T>(&ck, &format!("opt.v.{name}"), lens[i])?.to_vec(),
        );
    }
    let step_arr = crate::model::checkpoint_a1::<f64>(&ck, "opt.step", 1)?;
    let opt = AdamW::restore(opt_cfg, m, v, step_arr[0] as u64)?;
    Ok((reparam, opt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexdiff::MaskVector;
    use crate::model::ModelConfig;
    use tempfile::tempdir;

    fn setup(n: usize) -> (BaseParams<f64>, ReparamState<f64>, Vec<EncodedInstance>) {
        let cfg = ModelConfig::toy(16);
        let base = BaseParams::init(cfg, 40).unwrap();
        let re = ReparamState::init(&cfg, 2, 4, 41).unwrap();
        let data: Vec<EncodedInstance> = (0..n)
            .map(|i| {
                let t = (2 + (i % 5)) as u32;
                EncodedInstance {
                    instr: vec![0, t],
                    a_ids: vec![4, 5, t, 1],
                    a_mask: MaskVector::from_bits(vec![0, 1, 0, 0]).unwrap(),
                    b_ids: vec![4, 7, t, 1],
                    b_mask: MaskVector::from_bits(vec![0, 1, 0, 0]).unwrap(),
                }
            })
            .collect();
        (base, re, data)
    }

    #[test]
    fn log_length_is_epochs_times_dataset_size_at_batch_one() {
        let (base, mut re, data) = setup(4);
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let mut opt = new_optimizer(&cfg, &re);
        let sum =
            train_comparative(&base, &mut re, &mut opt, &data, &cfg, 0, |_, _, _| Ok(()))
                .unwrap();
        assert_eq!(sum.records.len(), 12);
        assert_eq!(sum.skipped, 0);
        assert_eq!(sum.records.last().unwrap().step, 12);
    }

    #[test]
    fn loss_decreases_over_training() {
        let (base, mut re, data) = setup(6);
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: 5e-3,
            ..Default::default()
        };
        let mut opt = new_optimizer(&cfg, &re);
        let sum =
            train_comparative(&base, &mut re, &mut opt, &data, &cfg, 0, |_, _, _| Ok(()))
                .unwrap();
        let first: f64 =
            sum.records[..6].iter().map(|r| r.total).sum::<f64>() / 6.0;
        let last: f64 = sum.records[sum.records.len() - 6..]
            .iter()
            .map(|r| r.total)
            .sum::<f64>()
            / 6.0;
        assert!(last < first, "first {first}, last {last}");
    }

    #[test]
    fn tiny_learning_rate_step_does_not_increase_instance_loss() {
        let (base, re, data) = setup(1);
        let cfg = TrainConfig {
            learning_rate: 1e-6,
            epochs: 1,
            ..Default::default()
        };
        let w = cfg.weights;
        let before = instance_loss(
            &base,
            &re.materialize(&base.cfg).unwrap(),
            &data[0],
            &w,
            cfg.kl_scope,
        )
        .unwrap()
        .total;
        let mut re2 = re.clone();
        let mut opt = new_optimizer(&cfg, &re2);
        train_comparative(&base, &mut re2, &mut opt, &data, &cfg, 0, |_, _, _| Ok(()))
            .unwrap();
        let after = instance_loss(
            &base,
            &re2.materialize(&base.cfg).unwrap(),
            &data[0],
            &w,
            cfg.kl_scope,
        )
        .unwrap()
        .total;
        assert!(after <= before, "before {before}, after {after}");
    }

    #[test]
    fn untrainable_instances_are_skipped_and_counted() {
        let (base, mut re, mut data) = setup(3);
        data.push(EncodedInstance {
            instr: vec![0],
            a_ids: vec![4, 1],
            a_mask: MaskVector::from_bits(vec![0, 0]).unwrap(),
            b_ids: vec![4, 1],
            b_mask: MaskVector::from_bits(vec![0, 0]).unwrap(),
        });
        let cfg = TrainConfig::default();
        let mut opt = new_optimizer(&cfg, &re);
        let sum =
            train_comparative(&base, &mut re, &mut opt, &data, &cfg, 0, |_, _, _| Ok(()))
                .unwrap();
        assert_eq!(sum.skipped, 1);
        assert_eq!(sum.records.len(), 3 * cfg.epochs);
    }

    #[test]
    fn resume_from_epoch_boundary_matches_uninterrupted_run() {
        let (base, re0, data) = setup(5);
        let cfg = TrainConfig {
            epochs: 4,
            ..Default::default()
        };

        let mut re_full = re0.clone();
        let mut opt_full = new_optimizer(&cfg, &re_full);
        train_comparative(&base, &mut re_full, &mut opt_full, &data, &cfg, 0, |_, _, _| Ok(()))
            .unwrap();

        let dir = tempdir().unwrap();
        let state = dir.path().join("trainer.ckpt");
        let mut re_half = re0.clone();
        let mut opt_half = new_optimizer(&cfg, &re_half);
        let half_cfg = TrainConfig {
            epochs: 2,
            ..cfg
        };
        train_comparative(
            &base,
            &mut re_half,
            &mut opt_half,
            &data,
            &half_cfg,
            0,
            |_, _, _| Ok(()),
        )
        .unwrap();
        save_trainer_state(&state, &base.cfg, &re_half, &opt_half).unwrap();

        let (mut re_res, mut opt_res) =
            load_trainer_state::<f64>(&state, &base.cfg, cfg.optimizer()).unwrap();
        assert_eq!(re_res, re_half);
        train_comparative(&base, &mut re_res, &mut opt_res, &data, &cfg, 2, |_, _, _| Ok(()))
            .unwrap();
        assert_eq!(re_res, re_full);
    }

    #[test]
    fn margin_win_rate_counts_strict_wins() {
        let (base, re, data) = setup(5);
        let prefix = re.materialize(&base.cfg).unwrap();
        let eval = evaluate_pairs(
            &base,
            &prefix,
            &data,
            &LossWeights::default(),
            KlScope::PreferredOnly,
        )
        .unwrap();
        assert_eq!(eval.count, 5);
        assert!((0.0..=1.0).contains(&eval.margin_win_rate));
    }
}
