//! Decoder parameters: embeddings, attention/MLP blocks, output head.
//!
//! Gradients reuse these same structs (zeroed, then accumulated into), so
//! the flat views below define a single canonical parameter ordering shared
//! by the optimizer, gradient clipping, the gradient checker and the
//! checkpoint writer.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::scalar::{c, Scalar};
use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Scale of the zero-mean init for weight matrices.
pub const INIT_SCALE: f64 = 0.02;
/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    pub w_q: Array2<T>,
    pub b_q: Array1<T>,
    pub w_k: Array2<T>,
    pub b_k: Array1<T>,
    pub w_v: Array2<T>,
    pub b_v: Array1<T>,
    pub w_o: Array2<T>,
    pub b_o: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
    pub w_fc: Array2<T>,
    pub b_fc: Array1<T>,
    pub w_proj: Array2<T>,
    pub b_proj: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams<T> {
    pub cfg: ModelConfig,
    pub tok_emb: Array2<T>,
    pub pos_emb: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub ln_f_g: Array1<T>,
    pub ln_f_b: Array1<T>,
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

fn normal_matrix<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let dist = Normal::new(0.0, INIT_SCALE).expect("valid normal");
    Array2::from_shape_fn((rows, cols), |_| c(dist.sample(rng)))
}

impl<T: Scalar> LayerParams<T> {
    fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let e = cfg.hidden;
        let m = cfg.mlp_dim();
        LayerParams {
            ln1_g: Array1::ones(e),
            ln1_b: Array1::zeros(e),
            w_q: normal_matrix(rng, e, e),
            b_q: Array1::zeros(e),
            w_k: normal_matrix(rng, e, e),
            b_k: Array1::zeros(e),
            w_v: normal_matrix(rng, e, e),
            b_v: Array1::zeros(e),
            w_o: normal_matrix(rng, e, e),
            b_o: Array1::zeros(e),
            ln2_g: Array1::ones(e),
            ln2_b: Array1::zeros(e),
            w_fc: normal_matrix(rng, e, m),
            b_fc: Array1::zeros(m),
            w_proj: normal_matrix(rng, m, e),
            b_proj: Array1::zeros(e),
        }
    }

    fn zeros(cfg: &ModelConfig) -> Self {
        let e = cfg.hidden;
        let m = cfg.mlp_dim();
        LayerParams {
            ln1_g: Array1::zeros(e),
            ln1_b: Array1::zeros(e),
            w_q: Array2::zeros((e, e)),
            b_q: Array1::zeros(e),
            w_k: Array2::zeros((e, e)),
            b_k: Array1::zeros(e),
            w_v: Array2::zeros((e, e)),
            b_v: Array1::zeros(e),
            w_o: Array2::zeros((e, e)),
            b_o: Array1::zeros(e),
            ln2_g: Array1::zeros(e),
            ln2_b: Array1::zeros(e),
            w_fc: Array2::zeros((e, m)),
            b_fc: Array1::zeros(m),
            w_proj: Array2::zeros((m, e)),
            b_proj: Array1::zeros(e),
        }
    }
}

impl<T: Scalar> BaseParams<T> {
    /// Fresh parameters: N(0, 0.02) weights, zero biases, unit layer-norm
    /// gains. The RNG consumption order is fixed, so a given seed always
    /// produces the same model.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tok_emb = normal_matrix(&mut rng, cfg.vocab, cfg.hidden);
        let pos_emb = normal_matrix(&mut rng, cfg.max_context, cfg.hidden);
        let layers = (0..cfg.layers)
            .map(|_| LayerParams::init(&cfg, &mut rng))
            .collect();
        let ln_f_g = Array1::ones(cfg.hidden);
        let ln_f_b = Array1::zeros(cfg.hidden);
        let w_out = normal_matrix(&mut rng, cfg.hidden, cfg.vocab);
        let b_out = Array1::zeros(cfg.vocab);
        Ok(BaseParams {
            cfg,
            tok_emb,
            pos_emb,
            layers,
            ln_f_g,
            ln_f_b,
            w_out,
            b_out,
        })
    }

    /// Same shapes, all zero. Used as a gradient accumulator.
    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BaseParams {
            tok_emb: Array2::zeros((cfg.vocab, cfg.hidden)),
            pos_emb: Array2::zeros((cfg.max_context, cfg.hidden)),
            layers: (0..cfg.layers).map(|_| LayerParams::zeros(&cfg)).collect(),
            ln_f_g: Array1::zeros(cfg.hidden),
            ln_f_b: Array1::zeros(cfg.hidden),
            w_out: Array2::zeros((cfg.hidden, cfg.vocab)),
            b_out: Array1::zeros(cfg.vocab),
            cfg,
        })
    }

    pub fn param_count(&self) -> usize {
        self.flat().iter().map(|s| s.len()).sum()
    }

    /// All parameter tensors as contiguous slices, in canonical order.
    pub fn flat(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::new();
        v.push(self.tok_emb.as_slice().expect("standard layout"));
        v.push(self.pos_emb.as_slice().expect("standard layout"));
        for l in &self.layers {
            for s in [
                l.ln1_g.as_slice(),
                l.ln1_b.as_slice(),
                l.w_q.as_slice(),
                l.b_q.as_slice(),
                l.w_k.as_slice(),
                l.b_k.as_slice(),
                l.w_v.as_slice(),
                l.b_v.as_slice(),
                l.w_o.as_slice(),
                l.b_o.as_slice(),
                l.ln2_g.as_slice(),
                l.ln2_b.as_slice(),
                l.w_fc.as_slice(),
                l.b_fc.as_slice(),
                l.w_proj.as_slice(),
                l.b_proj.as_slice(),
            ] {
                v.push(s.expect("standard layout"));
            }
        }
        v.push(self.ln_f_g.as_slice().expect("standard layout"));
        v.push(self.ln_f_b.as_slice().expect("standard layout"));
        v.push(self.w_out.as_slice().expect("standard layout"));
        v.push(self.b_out.as_slice().expect("standard layout"));
        v
    }

    /// Mutable form of [`BaseParams::flat`], same ordering.
    pub fn flat_mut(&mut self) -> Vec<&mut [T]> {
        let BaseParams {
            cfg: _,
            tok_emb,
            pos_emb,
            layers,
            ln_f_g,
            ln_f_b,
            w_out,
            b_out,
        } = self;
        let mut v: Vec<&mut [T]> = Vec::new();
        v.push(tok_emb.as_slice_mut().expect("standard layout"));
        v.push(pos_emb.as_slice_mut().expect("standard layout"));
        for l in layers.iter_mut() {
            let LayerParams {
                ln1_g,
                ln1_b,
                w_q,
                b_q,
                w_k,
                b_k,
                w_v,
                b_v,
                w_o,
                b_o,
                ln2_g,
                ln2_b,
                w_fc,
                b_fc,
                w_proj,
                b_proj,
            } = l;
            for s in [
                ln1_g.as_slice_mut(),
                ln1_b.as_slice_mut(),
                w_q.as_slice_mut(),
                b_q.as_slice_mut(),
                w_k.as_slice_mut(),
                b_k.as_slice_mut(),
                w_v.as_slice_mut(),
                b_v.as_slice_mut(),
                w_o.as_slice_mut(),
                b_o.as_slice_mut(),
                ln2_g.as_slice_mut(),
                ln2_b.as_slice_mut(),
                w_fc.as_slice_mut(),
                b_fc.as_slice_mut(),
                w_proj.as_slice_mut(),
                b_proj.as_slice_mut(),
            ] {
                v.push(s.expect("standard layout"));
            }
        }
        v.push(ln_f_g.as_slice_mut().expect("standard layout"));
        v.push(ln_f_b.as_slice_mut().expect("standard layout"));
        v.push(w_out.as_slice_mut().expect("standard layout"));
        v.push(b_out.as_slice_mut().expect("standard layout"));
        v
    }

    pub fn validate_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::InvalidParameter(
                "input id sequence is empty".to_string(),
            ));
        }
        if ids.len() > self.cfg.max_context {
            return Err(Error::ContextOverflow {
                len: ids.len(),
                max: self.cfg.max_context,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.cfg.vocab) {
            return Err(Error::InvalidParameter(format!(
                "token id {bad} out of vocabulary range {}",
                self.cfg.vocab
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ModelConfig::toy(64);
        let a: BaseParams<f64> = BaseParams::init(cfg, 7).unwrap();
        let b: BaseParams<f64> = BaseParams::init(cfg, 7).unwrap();
        assert_eq!(a, b);
        let c: BaseParams<f64> = BaseParams::init(cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn flat_views_cover_every_parameter() {
        let cfg = ModelConfig::toy(16);
        let mut p: BaseParams<f64> = BaseParams::init(cfg, 1).unwrap();
        let count = p.param_count();
        let e = cfg.hidden;
        let expected = cfg.vocab * e
            + cfg.max_context * e
            + cfg.layers * (4 * e * e + 4 * e + 4 * e + 2 * (e * cfg.mlp_dim()) + cfg.mlp_dim() + e)
            + 2 * e
            + e * cfg.vocab
            + cfg.vocab;
        assert_eq!(count, expected);
        assert_eq!(
            p.flat_mut().iter().map(|s| s.len()).sum::<usize>(),
            count
        );
        assert_eq!(p.flat().len(), p.flat_mut().len());
    }

    #[test]
    fn id_validation() {
        let cfg = ModelConfig {
            max_context: 4,
            ..ModelConfig::toy(8)
        };
        let p: BaseParams<f64> = BaseParams::init(cfg, 0).unwrap();
        assert!(p.validate_ids(&[0, 1, 7]).is_ok());
        assert!(p.validate_ids(&[]).is_err());
        assert!(p.validate_ids(&[8]).is_err());
        assert!(p.validate_ids(&[0; 5]).is_err());
    }
}
