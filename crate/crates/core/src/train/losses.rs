//! Training objective for the comparative stage.
//!
//! Each instance pairs a preferred completion `a` with a rejected one `b`
//! for the same instruction. Three terms combine:
//!
//! * a masked language-modeling loss that pushes probability onto the
//!   tokens unique to `a` (mask bit 1 = token differs between the pair);
//! * a ranking loss `softplus(-(s_a - s_b))` on the masked sequence scores,
//!   which prefers `a` by margin rather than in absolute terms;
//! * a KL penalty tying the prefixed model's distribution to the frozen
//!   base model on the common tokens (mask bit 0), so the prefix edits
//!   behavior only where the pair actually disagrees.
//!
//! Reported components are unweighted; `total` applies the weights.

use crate::error::{Error, Result};
use crate::lexdiff::MaskVector;
use crate::model::{
    backward, forward_with_prefix, log_softmax_row, BaseParams, ForwardTrace, PrefixParams,
};
use crate::scalar::{c, Scalar};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LossWeights {
    pub lm: f64,
    pub rank: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lm: 1.0,
            rank: 4.0,
            kl: 1.6,
        }
    }
}

/// Which sequences the KL penalty covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlScope {
    /// Only the preferred completion's common tokens.
    #[default]
    PreferredOnly,
    /// Common tokens of both completions.
    Both,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub lm: f64,
    pub rank: f64,
    pub kl: f64,
    pub total: f64,
}

/// One training pair, fully tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInstance {
    pub instr: Vec<u32>,
    pub a_ids: Vec<u32>,
    pub a_mask: MaskVector,
    pub b_ids: Vec<u32>,
    pub b_mask: MaskVector,
}

impl EncodedInstance {
    pub fn validate(&self) -> Result<()> {
        if self.instr.is_empty() {
            return Err(Error::EmptyInstruction);
        }
        if self.a_ids.len() != self.a_mask.len() {
            return Err(Error::LengthMismatch {
                what: "preferred ids vs mask".to_string(),
                left: self.a_ids.len(),
                right: self.a_mask.len(),
            });
        }
        if self.b_ids.len() != self.b_mask.len() {
            return Err(Error::LengthMismatch {
                what: "rejected ids vs mask".to_string(),
                left: self.b_ids.len(),
                right: self.b_mask.len(),
            });
        }
        Ok(())
    }

    /// False when neither mask has a set bit; such a pair carries no
    /// masked-score signal and is skipped by the trainer.
    pub fn trainable(&self) -> bool {
        !(self.a_mask.all_zero() && self.b_mask.all_zero())
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large |x|.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Ranking loss on masked scores; zero-centered at `softplus(0) = ln 2`.
pub fn rank_loss<T: Scalar>(s_a: T, s_b: T) -> T {
    softplus(-(s_a - s_b))
}

/// KL(p || q) over explicit distributions. Both must sum to 1 within 1e-6.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            what: "distributions".to_string(),
            left: p.len(),
            right: q.len(),
        });
    }
    for (name, d) in [("p", p), ("q", q)] {
        let sum: f64 = d.iter().map(|&x| x.to_f64()).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "distribution {name} sums to {sum}, expected 1"
            )));
        }
    }
    let mut kl = T::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > T::zero() {
            if qi <= T::zero() {
                return Err(Error::NonFinite {
                    context: "kl with zero reference mass".to_string(),
                });
            }
            kl += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(kl)
}

/// One completion's forward pass plus the per-token log-softmax rows and
/// the mask-weighted score.
pub(crate) struct SeqRun<T> {
    pub(crate) trace: ForwardTrace<T>,
    pub(crate) instr_len: usize,
    /// Log-softmax of the logit row conditioning each completion token.
    pub(crate) lsm: Vec<Array1<T>>,
    pub(crate) s_masked: T,
}

pub(crate) fn run_seq<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    instr: &[u32],
    x: &[u32],
    mask: &MaskVector,
) -> Result<SeqRun<T>> {
    if mask.len() != x.len() {
        return Err(Error::LengthMismatch {
            what: "mask vs completion".to_string(),
            left: mask.len(),
            right: x.len(),
        });
    }
    let mut ids = instr.to_vec();
    ids.extend_from_slice(x);
    let trace = forward_with_prefix(base, prefix, &ids)?;
    let instr_len = instr.len();
    let mut lsm = Vec::with_capacity(x.len());
    let mut s_masked = T::zero();
    for (t, &target) in x.iter().enumerate() {
        let row = log_softmax_row(trace.logits.row(instr_len - 1 + t));
        if mask.bits()[t] != 0 {
            s_masked += row[target as usize];
        }
        lsm.push(row);
    }
    Ok(SeqRun {
        trace,
        instr_len,
        lsm,
        s_masked,
    })
}

/// Sum of per-position KL(prefixed || base) over common (mask 0) tokens.
fn kl_common<T: Scalar>(pref: &SeqRun<T>, plain: &SeqRun<T>, mask: &MaskVector) -> T {
    let mut total = T::zero();
    for (t, &bit) in mask.bits().iter().enumerate() {
        if bit != 0 {
            continue;
        }
        let lp = &pref.lsm[t];
        let lq = &plain.lsm[t];
        let mut kl_t = T::zero();
        for v in 0..lp.len() {
            kl_t += lp[v].exp() * (lp[v] - lq[v]);
        }
        total += kl_t;
    }
    total
}

fn breakdown<T: Scalar>(
    s_a: T,
    s_b: T,
    kl: T,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let lm = -s_a;
    let rank = rank_loss(s_a, s_b);
    let total = c::<T>(weights.lm) * lm + c::<T>(weights.rank) * rank + c::<T>(weights.kl) * kl;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "comparative loss".to_string(),
        });
    }
    Ok(LossBreakdown {
        lm: lm.to_f64(),
        rank: rank.to_f64(),
        kl: kl.to_f64(),
        total: total.to_f64(),
    })
}

/// Masked score margin `s_a - s_b` of an instance; `prefix` None scores
/// under the bare base model. Positive means the model prefers the
/// higher-quality completion.
pub fn instance_margin<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    inst: &EncodedInstance,
) -> Result<f64> {
    inst.validate()?;
    let a = run_seq(base, prefix, &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let b = run_seq(base, prefix, &inst.instr, &inst.b_ids, &inst.b_mask)?;
    Ok((a.s_masked - b.s_masked).to_f64())
}

/// Sum and count of per-position KL(prefixed || base) over the preferred
/// completion's common (mask 0) tokens.
pub fn common_kl_stats<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    inst: &EncodedInstance,
) -> Result<(f64, usize)> {
    inst.validate()?;
    let a = run_seq(base, Some(prefix), &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let a_plain = run_seq(base, None, &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let total = kl_common(&a, &a_plain, &inst.a_mask);
    let count = inst.a_mask.bits().iter().filter(|&&b| b == 0).count();
    Ok((total.to_f64(), count))
}

/// Loss of one instance under a materialized prefix, no gradients.
pub fn instance_loss<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    inst: &EncodedInstance,
    weights: &LossWeights,
    scope: KlScope,
) -> Result<LossBreakdown> {
    inst.validate()?;
    let a = run_seq(base, Some(prefix), &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let b = run_seq(base, Some(prefix), &inst.instr, &inst.b_ids, &inst.b_mask)?;
    let a_plain = run_seq(base, None, &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let mut kl = kl_common(&a, &a_plain, &inst.a_mask);
    if scope == KlScope::Both {
        let b_plain = run_seq(base, None, &inst.instr, &inst.b_ids, &inst.b_mask)?;
        kl += kl_common(&b, &b_plain, &inst.b_mask);
    }
    breakdown(a.s_masked, b.s_masked, kl, weights)
}

/// Builds the logit gradient for one completion: `coeff * (onehot - P)` on
/// masked positions, plus the KL jacobian `kl_w * P .* ((lnP - lnQ) - kl_t)`
/// on common positions.
pub(crate) fn seq_dlogits<T: Scalar>(
    run: &SeqRun<T>,
    x: &[u32],
    mask: &MaskVector,
    coeff: T,
    kl_w: T,
    plain: Option<&SeqRun<T>>,
) -> Array2<T> {
    let mut d = Array2::<T>::zeros(run.trace.logits.dim());
    for (t, &target) in x.iter().enumerate() {
        let r = run.instr_len - 1 + t;
        let lp = &run.lsm[t];
        if mask.bits()[t] != 0 {
            if coeff != T::zero() {
                for v in 0..lp.len() {
                    d[[r, v]] -= coeff * lp[v].exp();
                }
                d[[r, target as usize]] += coeff;
            }
        } else if let Some(plain) = plain {
            if kl_w != T::zero() {
                let lq = &plain.lsm[t];
                let mut kl_t = T::zero();
                for v in 0..lp.len() {
                    kl_t += lp[v].exp() * (lp[v] - lq[v]);
                }
                for v in 0..lp.len() {
                    d[[r, v]] += kl_w * lp[v].exp() * ((lp[v] - lq[v]) - kl_t);
                }
            }
        }
    }
    d
}

/// Loss and prefix gradients for one instance. The base model is treated
/// as frozen: only the gradient on the prefix key/value rows is returned.
pub fn instance_loss_and_grads<T: Scalar>(
    base: &BaseParams<T>,
    prefix: &PrefixParams<T>,
    inst: &EncodedInstance,
    weights: &LossWeights,
    scope: KlScope,
) -> Result<(LossBreakdown, PrefixParams<T>)> {
    inst.validate()?;
    let a = run_seq(base, Some(prefix), &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let b = run_seq(base, Some(prefix), &inst.instr, &inst.b_ids, &inst.b_mask)?;
    let a_plain = run_seq(base, None, &inst.instr, &inst.a_ids, &inst.a_mask)?;
    let b_plain = if scope == KlScope::Both {
        Some(run_seq(base, None, &inst.instr, &inst.b_ids, &inst.b_mask)?)
    } else {
        None
    };

    let mut kl = kl_common(&a, &a_plain, &inst.a_mask);
    if let Some(bp) = &b_plain {
        kl += kl_common(&b, bp, &inst.b_mask);
    }
    let out = breakdown(a.s_masked, b.s_masked, kl, weights)?;

    let w_lm = c::<T>(weights.lm);
    let w_rank = c::<T>(weights.rank);
    let w_kl = c::<T>(weights.kl);
    let g = sigmoid(a.s_masked - b.s_masked);
    let coeff_a = -(w_lm + w_rank * (T::one() - g));
    let coeff_b = w_rank * (T::one() - g);

    let da = seq_dlogits(&a, &inst.a_ids, &inst.a_mask, coeff_a, w_kl, Some(&a_plain));
    let db = seq_dlogits(&b, &inst.b_ids, &inst.b_mask, coeff_b, w_kl, b_plain.as_ref());

    let ga = backward(base, Some(prefix), &a.trace, &da)?;
    let gb = backward(base, Some(prefix), &b.trace, &db)?;
    let mut pg = ga.prefix.expect("prefix grads present");
    let qb = gb.prefix.expect("prefix grads present");
    for (x, y) in pg.keys.iter_mut().zip(&qb.keys) {
        *x += y;
    }
    for (x, y) in pg.values.iter_mut().zip(&qb.values) {
        *x += y;
    }
    Ok((out, pg))
}
