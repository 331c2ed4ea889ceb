//! AdamW with decoupled weight decay and global-norm gradient clipping,
//! operating on the flat slice views exposed by the parameter structs.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Clip gradients to this global L2 norm before the update; None
    /// disables clipping. The pre-clip norm is still reported.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
        }
    }
}

pub fn global_norm<T: Scalar>(grads: &[&[T]]) -> f64 {
    let mut acc = 0.0f64;
    for g in grads {
        for &x in *g {
            let xf = x.to_f64();
            acc += xf * xf;
        }
    }
    acc.sqrt()
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    /// `lens` gives the length of each parameter slice, in the same order
    /// the slices will be passed to [`AdamW::step`].
    pub fn new(cfg: AdamWConfig, lens: &[usize]) -> Self {
        AdamW {
            cfg,
            step: 0,
            m: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment buffers and step counter, for checkpointing.
    pub fn state(&self) -> (&[Vec<T>], &[Vec<T>], u64) {
        (&self.m, &self.v, self.step)
    }

    pub fn restore(cfg: AdamWConfig, m: Vec<Vec<T>>, v: Vec<Vec<T>>, step: u64) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::LengthMismatch {
                what: "optimizer moment buffers".to_string(),
                left: m.iter().map(|x| x.len()).sum(),
                right: v.iter().map(|x| x.len()).sum(),
            });
        }
        Ok(AdamW { cfg, step, m, v })
    }

    /// One update. Returns the pre-clip global gradient norm.
    pub fn step(&mut self, mut params: Vec<&mut [T]>, grads: &[&[T]]) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "optimizer slice count".to_string(),
                left: params.len(),
                right: self.m.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::LengthMismatch {
                    what: format!("optimizer slice {i}"),
                    left: p.len(),
                    right: self.m[i].len(),
                });
            }
        }
        let norm = global_norm(grads);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                context: "gradient norm".to_string(),
            });
        }
        let scale = match self.cfg.clip_norm {
            Some(clip) if norm > clip => c::<T>(clip / norm),
            _ => T::one(),
        };
        self.step += 1;
        let t = self.step as i32;
        let b1 = c::<T>(self.cfg.beta1);
        let b2 = c::<T>(self.cfg.beta2);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let lr = c::<T>(self.cfg.lr);
        let eps = c::<T>(self.cfg.eps);
        let wd = c::<T>(self.cfg.weight_decay);
        for i in 0..self.m.len() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = &mut params[i];
            let g = grads[i];
            for j in 0..m.len() {
                let gj = g[j] * scale;
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * (mhat / (vhat.sqrt() + eps) + wd * p[j]);
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_a_quadratic() {
        let mut theta = [5.0f64];
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.05,
                weight_decay: 0.0,
                clip_norm: None,
                ..Default::default()
            },
            &[1],
        );
        for _ in 0..500 {
            let g = [2.0 * (theta[0] - 3.0)];
            opt.step(vec![&mut theta], &[&g]).unwrap();
        }
        assert!((theta[0] - 3.0).abs() < 1e-3, "theta = {}", theta[0]);
    }

    #[test]
    fn reports_preclip_norm_and_clips_update() {
        let mut a = [0.0f64];
        let mut b = [0.0f64];
        let cfg = AdamWConfig {
            clip_norm: Some(1.0),
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt_a = AdamW::new(cfg, &[1]);
        let mut opt_b = AdamW::new(cfg, &[1]);
        let big = [300.0f64];
        let unit = [1.0f64];
        let norm = opt_a.step(vec![&mut a], &[&big]).unwrap();
        assert_eq!(norm, 300.0);
        opt_b.step(vec![&mut b], &[&unit]).unwrap();
        // After clipping, a 300x gradient behaves exactly like a unit one.
        assert!((a[0] - b[0]).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient() {
        let mut theta = [2.0f64];
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.1,
                weight_decay: 0.5,
                ..Default::default()
            },
            &[1],
        );
        let zero = [0.0f64];
        opt.step(vec![&mut theta], &[&zero]).unwrap();
        assert!((theta[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn restore_reproduces_training_exactly() {
        let cfg = AdamWConfig::default();
        let grads: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 * 0.3 - 1.0, 0.7]).collect();
        let mut p1 = [1.0f64, -2.0];
        let mut opt1 = AdamW::new(cfg, &[2]);
        for g in &grads {
            opt1.step(vec![&mut p1], &[g]).unwrap();
        }
        let mut p2 = [1.0f64, -2.0];
        let mut opt2 = AdamW::new(cfg, &[2]);
        for g in &grads[..5] {
            opt2.step(vec![&mut p2], &[g]).unwrap();
        }
        let (m, v, step) = opt2.state();
        let mut opt3 = AdamW::restore(cfg, m.to_vec(), v.to_vec(), step).unwrap();
        for g in &grads[5..] {
            opt3.step(vec![&mut p2], &[g]).unwrap();
        }
        assert_eq!(p1, p2);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let mut opt: AdamW<f64> = AdamW::new(AdamWConfig::default(), &[2]);
        let mut p = [0.0f64];
        let g = [0.0f64];
        assert!(opt.step(vec![&mut p], &[&g]).is_err());
    }
}
