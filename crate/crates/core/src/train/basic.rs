//! Optional second training stage: plain negative log-likelihood of the
//! preferred completion given its instruction, still optimizing only the
//! prefix factors. Equivalent to the masked objective with an all-ones
//! mask and the rank/KL terms switched off.

use crate::error::{Error, Result};
use crate::lexdiff::MaskVector;
use crate::model::{backward, BaseParams, PrefixParams, ReparamState};
use crate::scalar::{c, Scalar};
use crate::train::adamw::AdamW;
use crate::train::comparative::{TrainConfig, TrainRecord, TrainSummary};
use crate::train::losses::{run_seq, seq_dlogits, EncodedInstance};
use crate::util::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Full-sequence NLL of the preferred completion and its prefix gradient.
fn nll_and_grads<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    inst: &EncodedInstance,
) -> Result<(f64, PrefixParams<T>)> {
    inst.validate()?;
    let ones = MaskVector::from_bits(vec![1; inst.a_ids.len()])?;
    let run = run_seq(base, Some(prefix), &inst.instr, &inst.a_ids, &ones)?;
    let nll = -run.s_masked.to_f64();
    if !nll.is_finite() {
        return Err(Error::NonFinite {
            context: "refinement nll".to_string(),
        });
    }
    let d = seq_dlogits(&run, &inst.a_ids, &ones, -T::one(), T::zero(), None);
    let grads = backward(base, Some(prefix), &run.trace, &d)?;
    Ok((nll, grads.prefix.expect("prefix grads present")))
}

/// Stage-two refinement over the preferred halves of the dataset. Reuses
/// the stage-one optimizer contract; records carry the NLL in both the
/// `lm` and `total` columns with zero rank/kl. `start_epoch` lets a resumed
/// run skip epochs already covered by a restored optimizer state.
pub fn train_basic<T: Scalar>(
    base: &BaseParams<T>,
    reparam: &mut ReparamState<T>,
    opt: &mut AdamW<T>,
    data: &[EncodedInstance],
    cfg: &TrainConfig,
    start_epoch: usize,
    mut on_epoch: impl FnMut(usize, &ReparamState<T>, &AdamW<T>) -> Result<()>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter(
            "no instances for refinement".to_string(),
        ));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut records = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let mut order = idx.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "refine-shuffle", epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let prefix = reparam.materialize(&base.cfg)?;
            let mut acc = PrefixParams::<T>::zeros(&base.cfg, prefix.m_len);
            let mut nll_sum = 0.0;
            for &i in batch {
                let (nll, pg) = nll_and_grads(base, &prefix, &data[i])?;
                nll_sum += nll;
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
                lm: nll_sum / n,
                rank: 0.0,
                kl: 0.0,
                total: nll_sum / n,
                grad_norm,
            });
        }
        on_epoch(epoch, reparam, opt)?;
    }
    Ok(TrainSummary {
        records,
        skipped: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::train::comparative::new_optimizer;
    use crate::train::losses::{instance_loss, KlScope, LossWeights};

    fn setup() -> (BaseParams<f64>, ReparamState<f64>, Vec<EncodedInstance>) {
        let cfg = ModelConfig::toy(16);
        let base = BaseParams::init(cfg, 50).unwrap();
        let re = ReparamState::init(&cfg, 2, 4, 51).unwrap();
        let data: Vec<EncodedInstance> = (0..4)
            .map(|i| EncodedInstance {
                instr: vec![0, (2 + i) as u32],
                a_ids: vec![4, 5, 6, 1],
                a_mask: MaskVector::from_bits(vec![0, 1, 0, 0]).unwrap(),
                b_ids: vec![4, 7, 6, 1],
                b_mask: MaskVector::from_bits(vec![0, 1, 0, 0]).unwrap(),
            })
            .collect();
        (base, re, data)
    }

    #[test]
    fn nll_drops_across_epochs() {
        let (base, mut re, data) = setup();
        let cfg = TrainConfig {
            epochs: 8,
            learning_rate: 5e-3,
            ..Default::default()
        };
        let mut opt = new_optimizer(&cfg, &re);
        let sum = train_basic(&base, &mut re, &mut opt, &data, &cfg, 0, |_, _, _| Ok(())).unwrap();
        let first: f64 = sum.records[..4].iter().map(|r| r.lm).sum::<f64>() / 4.0;
        let last: f64 =
            sum.records[sum.records.len() - 4..].iter().map(|r| r.lm).sum::<f64>() / 4.0;
        assert!(last < first, "first {first}, last {last}");
        assert!(sum.records.iter().all(|r| r.rank == 0.0 && r.kl == 0.0));
    }

    #[test]
    fn stage_two_loss_equals_full_mask_lm_loss() {
        let (base, re, data) = setup();
        let prefix = re.materialize(&base.cfg).unwrap();
        let (nll, _) = nll_and_grads(&base, &prefix, &data[0]).unwrap();
        let mut full = data[0].clone();
        full.a_mask = MaskVector::from_bits(vec![1; full.a_ids.len()]).unwrap();
        let w = LossWeights {
            lm: 1.0,
            rank: 0.0,
            kl: 0.0,
        };
        let bd = instance_loss(&base, &prefix, &full, &w, KlScope::PreferredOnly).unwrap();
        assert!((bd.lm - nll).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_prefix_unchanged() {
        use crate::train::adamw::{AdamW, AdamWConfig};
        let (base, mut re, data) = setup();
        let before = re.clone();
        let cfg = TrainConfig::default();
        let lens: Vec<usize> = re.flat().iter().map(|s| s.len()).collect();
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.0,
                ..cfg.optimizer()
            },
            &lens,
        );
        train_basic(&base, &mut re, &mut opt, &data, &cfg, 0, |_, _, _| Ok(())).unwrap();
        assert_eq!(re, before);
    }
}
