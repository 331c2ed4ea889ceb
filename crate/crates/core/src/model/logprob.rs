//! Log-probabilities of completions under the decoder.
//!
//! A scored sequence is `instruction ++ completion`; the logit row at
//! position `instr_len - 1 + t` predicts completion token `t`. The
//! instruction must be non-empty (it at least carries the start token), so
//! every completion token has a conditioning row.

use crate::error::{Error, Result};
use crate::lexdiff::MaskVector;
use crate::model::forward::{forward_with_prefix, ForwardTrace};
use crate::model::params::BaseParams;
use crate::model::prefix::PrefixParams;
use crate::scalar::Scalar;
use ndarray::{Array1, ArrayView1};

pub fn log_softmax_row<T: Scalar>(row: ArrayView1<'_, T>) -> Array1<T> {
    let mut max = row[0];
    for &x in row.iter().skip(1) {
        if x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for &x in row.iter() {
        sum += (x - max).exp();
    }
    let lse = max + sum.ln();
    row.mapv(|x| x - lse)
}

/// Per-token log-probabilities of the completion recorded in `trace`
/// (everything after the first `instr_len` ids).
pub fn token_logprobs<T: Scalar>(trace: &ForwardTrace<T>, instr_len: usize) -> Result<Vec<T>> {
    if instr_len == 0 {
        return Err(Error::EmptyInstruction);
    }
    if instr_len > trace.ids.len() {
        return Err(Error::LengthMismatch {
            what: "instruction length vs trace".to_string(),
            left: instr_len,
            right: trace.ids.len(),
        });
    }
    let x_len = trace.ids.len() - instr_len;
    let mut out = Vec::with_capacity(x_len);
    for t in 0..x_len {
        let row = trace.logits.row(instr_len - 1 + t);
        let lsm = log_softmax_row(row);
        out.push(lsm[trace.ids[instr_len + t] as usize]);
    }
    Ok(out)
}

/// Sum of completion log-probabilities weighted by `mask` bits.
pub fn masked_logprob_from_trace<T: Scalar>(
    trace: &ForwardTrace<T>,
    instr_len: usize,
    mask: &MaskVector,
) -> Result<T> {
    let lps = token_logprobs(trace, instr_len)?;
    if mask.len() != lps.len() {
        return Err(Error::LengthMismatch {
            what: "mask vs completion".to_string(),
            left: mask.len(),
            right: lps.len(),
        });
    }
    let mut total = T::zero();
    for (lp, &bit) in lps.iter().zip(mask.bits()) {
        if bit != 0 {
            total += *lp;
        }
    }
    Ok(total)
}

/// Unmasked log-probability of `x` given `instr`, running a fresh forward.
pub fn sequence_logprob<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    instr: &[u32],
    x: &[u32],
) -> Result<T> {
    if instr.is_empty() {
        return Err(Error::EmptyInstruction);
    }
    let mut ids = instr.to_vec();
    ids.extend_from_slice(x);
    let trace = forward_with_prefix(base, prefix, &ids)?;
    let lps = token_logprobs(&trace, instr.len())?;
    Ok(lps.into_iter().fold(T::zero(), |a, b| a + b))
}

/// Masked log-probability of `x` given `instr`, running a fresh forward.
pub fn masked_logprob<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    instr: &[u32],
    x: &[u32],
    mask: &MaskVector,
) -> Result<T> {
    if instr.is_empty() {
        return Err(Error::EmptyInstruction);
    }
    let mut ids = instr.to_vec();
    ids.extend_from_slice(x);
    let trace = forward_with_prefix(base, prefix, &ids)?;
    masked_logprob_from_trace(&trace, instr.len(), mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::forward::forward;

    fn toy() -> BaseParams<f64> {
        BaseParams::init(ModelConfig::toy(16), 5).unwrap()
    }

    #[test]
    fn log_softmax_is_normalized() {
        let base = toy();
        let tr = forward(&base, &[1, 2, 3]).unwrap();
        let lsm = log_softmax_row(tr.logits.row(0));
        let total: f64 = lsm.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(lsm.iter().all(|&l| l < 0.0));
    }

    #[test]
    fn token_logprobs_align_with_targets() {
        let base = toy();
        let ids = [1u32, 2, 3, 4, 5];
        let tr = forward(&base, &ids).unwrap();
        let lps = token_logprobs(&tr, 2).unwrap();
        assert_eq!(lps.len(), 3);
        let lsm = log_softmax_row(tr.logits.row(1));
        assert_eq!(lps[0], lsm[3]);
        let lsm = log_softmax_row(tr.logits.row(3));
        assert_eq!(lps[2], lsm[5]);
    }

    #[test]
    fn masked_sum_selects_only_set_bits() {
        let base = toy();
        let ids = [1u32, 2, 3, 4, 5];
        let tr = forward(&base, &ids).unwrap();
        let lps = token_logprobs(&tr, 2).unwrap();
        let mask = MaskVector::from_bits(vec![1, 0, 1]).unwrap();
        let got = masked_logprob_from_trace(&tr, 2, &mask).unwrap();
        assert!((got - (lps[0] + lps[2])).abs() < 1e-15);
        let zero = MaskVector::from_bits(vec![0, 0, 0]).unwrap();
        assert_eq!(masked_logprob_from_trace(&tr, 2, &zero).unwrap(), 0.0);
    }

    #[test]
    fn rejects_empty_instruction_and_bad_mask_length() {
        let base = toy();
        assert!(matches!(
            sequence_logprob(&base, None, &[], &[1, 2]),
            Err(Error::EmptyInstruction)
        ));
        let mask = MaskVector::from_bits(vec![1]).unwrap();
        assert!(masked_logprob(&base, None, &[1], &[2, 3], &mask).is_err());
    }

    #[test]
    fn sequence_logprob_is_sum_of_tokens() {
        let base = toy();
        let instr = [1u32, 2];
        let x = [7u32, 8, 9];
        let total = sequence_logprob(&base, None, &instr, &x).unwrap();
        let mut ids = instr.to_vec();
        ids.extend_from_slice(&x);
        let tr = forward(&base, &ids).unwrap();
        let sum: f64 = token_logprobs(&tr, 2).unwrap().iter().sum();
        assert_eq!(total, sum);
    }
}
