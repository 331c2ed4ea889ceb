//! Base-model pretraining: plain next-token NLL over a token corpus,
//! updating every parameter. This stands in for the large pretrained model
//! the prefix later attaches to; after this stage the base is frozen.

use crate::error::{Error, Result};
use crate::model::{backward, forward, log_softmax_row, BaseParams, ModelGrads};
use crate::scalar::{c, Scalar};
use crate::train::adamw::{AdamW, AdamWConfig};
use crate::util::derive_seed;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            clip_norm: 1.0,
            seed: 0,
            batch_size: 8,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch size must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            clip_norm: Some(self.clip_norm),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub step: u64,
    pub epoch: usize,
    /// Mean NLL per predicted token over the step's batch.
    pub nll: f64,
    pub grad_norm: f64,
}

/// NLL of predicting `ids[1..]` from the left, plus full base gradients.
fn seq_nll_and_grads<T: Scalar>(
    base: &BaseParams<T>,
    ids: &[u32],
) -> Result<(f64, usize, ModelGrads<T>)> {
    if ids.len() < 2 {
        return Err(Error::InvalidParameter(
            "pretraining sequences need at least two tokens".to_string(),
        ));
    }
    let trace = forward(base, ids)?;
    let mut dlogits = Array2::<T>::zeros(trace.logits.dim());
    let mut nll = 0.0f64;
    for t in 0..ids.len() - 1 {
        let lsm = log_softmax_row(trace.logits.row(t));
        let target = ids[t + 1] as usize;
        nll -= lsm[target].to_f64();
        for v in 0..lsm.len() {
            dlogits[[t, v]] = lsm[v].exp();
        }
        dlogits[[t, target]] -= T::one();
    }
    let grads = backward(base, None, &trace, &dlogits)?;
    Ok((nll, ids.len() - 1, grads))
}

/// Trains the base model in place. Returns the per-step log.
pub fn train_base<T: Scalar>(
    base: &mut BaseParams<T>,
    corpus: &[Vec<u32>],
    cfg: &PretrainConfig,
) -> Result<Vec<PretrainRecord>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidParameter(
            "pretraining corpus is empty".to_string(),
        ));
    }
    let lens: Vec<usize> = base.flat().iter().map(|s| s.len()).collect();
    let mut opt: AdamW<T> = AdamW::new(cfg.optimizer(), &lens);
    let mut records = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "pretrain-shuffle", epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = ModelGrads::zeros(base, None)?;
            let mut nll_sum = 0.0;
            let mut tok_count = 0usize;
            for &i in batch {
                let (nll, toks, g) = seq_nll_and_grads(base, &corpus[i])?;
                nll_sum += nll;
                tok_count += toks;
                acc.add_assign(&g)?;
            }
            acc.scale(c::<T>(1.0 / batch.len() as f64));
            let grad_norm = opt.step(base.flat_mut(), &acc.base.flat())?;
            records.push(PretrainRecord {
                step: opt.step_count(),
                epoch,
                nll: nll_sum / tok_count as f64,
                grad_norm,
            });
        }
    }
    Ok(records)
}

/// Mean NLL per token of the corpus under the current weights.
pub fn corpus_nll<T: Scalar>(base: &BaseParams<T>, corpus: &[Vec<u32>]) -> Result<f64> {
    let mut nll = 0.0;
    let mut toks = 0usize;
    for ids in corpus {
        if ids.len() < 2 {
            continue;
        }
        let trace = forward(base, ids)?;
        for t in 0..ids.len() - 1 {
            let lsm = log_softmax_row(trace.logits.row(t));
            nll -= lsm[ids[t + 1] as usize].to_f64();
            toks += 1;
        }
    }
    if toks == 0 {
        return Err(Error::InvalidParameter(
            "corpus has no predictable tokens".to_string(),
        ));
    }
    Ok(nll / toks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn corpus() -> Vec<Vec<u32>> {
        vec![
            vec![0, 2, 3, 4, 5, 1],
            vec![0, 2, 3, 6, 5, 1],
            vec![0, 7, 8, 9, 1],
            vec![0, 7, 8, 10, 1],
        ]
    }

    #[test]
    fn nll_decreases_across_epochs() {
        let mut base: BaseParams<f64> = BaseParams::init(ModelConfig::toy(16), 60).unwrap();
        let data = corpus();
        let before = corpus_nll(&base, &data).unwrap();
        let cfg = PretrainConfig {
            epochs: 15,
            ..Default::default()
        };
        train_base(&mut base, &data, &cfg).unwrap();
        let after = corpus_nll(&base, &data).unwrap();
        assert!(after < before, "before {before}, after {after}");
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let data = corpus();
        let cfg = PretrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let mut a: BaseParams<f64> = BaseParams::init(ModelConfig::toy(16), 61).unwrap();
        let mut b: BaseParams<f64> = BaseParams::init(ModelConfig::toy(16), 61).unwrap();
        train_base(&mut a, &data, &cfg).unwrap();
        train_base(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repeated_token_sequence_is_memorized() {
        let mut base: BaseParams<f64> = BaseParams::init(ModelConfig::toy(16), 62).unwrap();
        let data = vec![vec![3u32; 12]];
        let cfg = PretrainConfig {
            epochs: 120,
            learning_rate: 5e-3,
            batch_size: 1,
            ..Default::default()
        };
        train_base(&mut base, &data, &cfg).unwrap();
        let nll = corpus_nll(&base, &data).unwrap();
        assert!(nll < 0.05, "nll {nll}");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let mut base: BaseParams<f64> = BaseParams::init(ModelConfig::toy(16), 63).unwrap();
        let cfg = PretrainConfig::default();
        assert!(train_base(&mut base, &[], &cfg).is_err());
        assert!(train_base(&mut base, &[vec![1]], &cfg).is_err());
    }
}
