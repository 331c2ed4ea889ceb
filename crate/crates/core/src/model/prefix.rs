//! Trainable attention prefix and its low-rank reparameterization.
//!
//! The prefix is a matrix of shape `m_len x prefix_dim` where `prefix_dim`
//! packs one key row and one value row per layer. It is never stored
//! directly during training; instead it is the product of a narrow factor
//! `h_prime` (`m_len x bottleneck`) and a projection `w`
//! (`bottleneck x prefix_dim`), both of which are optimized. After training
//! the product is materialized once and the factors can be discarded.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::INIT_SCALE;
use crate::scalar::{c, Scalar};
use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Materialized per-layer key/value rows prepended to attention.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixParams<T> {
    pub m_len: usize,
    /// Per layer, `m_len x hidden`.
    pub keys: Vec<Array2<T>>,
    /// Per layer, `m_len x hidden`.
    pub values: Vec<Array2<T>>,
}

impl<T: Scalar> PrefixParams<T> {
    pub fn zeros(cfg: &ModelConfig, m_len: usize) -> Self {
        PrefixParams {
            m_len,
            keys: (0..cfg.layers)
                .map(|_| Array2::zeros((m_len, cfg.hidden)))
                .collect(),
            values: (0..cfg.layers)
                .map(|_| Array2::zeros((m_len, cfg.hidden)))
                .collect(),
        }
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.keys.len() != cfg.layers || self.values.len() != cfg.layers {
            return Err(Error::ShapeMismatch {
                name: "prefix layers".to_string(),
                expected: format!("{}", cfg.layers),
                found: format!("{}/{}", self.keys.len(), self.values.len()),
            });
        }
        for (i, a) in self.keys.iter().chain(self.values.iter()).enumerate() {
            if a.dim() != (self.m_len, cfg.hidden) {
                return Err(Error::ShapeMismatch {
                    name: format!("prefix tensor {i}"),
                    expected: format!("{}x{}", self.m_len, cfg.hidden),
                    found: format!("{}x{}", a.dim().0, a.dim().1),
                });
            }
        }
        Ok(())
    }
}

/// The trainable factors behind the prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamState<T> {
    /// `m_len x bottleneck`.
    pub h_prime: Array2<T>,
    /// `bottleneck x prefix_dim`.
    pub w: Array2<T>,
}

impl<T: Scalar> ReparamState<T> {
    pub fn init(cfg: &ModelConfig, m_len: usize, bottleneck: usize, seed: u64) -> Result<Self> {
        if m_len == 0 || bottleneck == 0 {
            return Err(Error::InvalidParameter(
                "prefix length and bottleneck must be positive".to_string(),
            ));
        }
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, INIT_SCALE).expect("valid normal");
        let h_prime = Array2::from_shape_fn((m_len, bottleneck), |_| c(dist.sample(&mut rng)));
        let w = Array2::from_shape_fn((bottleneck, cfg.prefix_dim()), |_| {
            c(dist.sample(&mut rng))
        });
        Ok(ReparamState { h_prime, w })
    }

    pub fn zeros_like(&self) -> Self {
        ReparamState {
            h_prime: Array2::zeros(self.h_prime.dim()),
            w: Array2::zeros(self.w.dim()),
        }
    }

    pub fn m_len(&self) -> usize {
        self.h_prime.nrows()
    }

    pub fn bottleneck(&self) -> usize {
        self.h_prime.ncols()
    }

    /// Expands `h_prime @ w` into per-layer key/value rows. Column block
    /// `2*l*hidden .. 2*l*hidden + hidden` is layer `l`'s keys, the next
    /// `hidden` columns its values.
    pub fn materialize(&self, cfg: &ModelConfig) -> Result<PrefixParams<T>> {
        if self.w.ncols() != cfg.prefix_dim() {
            return Err(Error::ShapeMismatch {
                name: "prefix projection".to_string(),
                expected: format!("{}x{}", self.bottleneck(), cfg.prefix_dim()),
                found: format!("{}x{}", self.w.nrows(), self.w.ncols()),
            });
        }
        if self.h_prime.ncols() != self.w.nrows() {
            return Err(Error::ShapeMismatch {
                name: "prefix factor".to_string(),
                expected: format!("m x {}", self.w.nrows()),
                found: format!("{}x{}", self.h_prime.nrows(), self.h_prime.ncols()),
            });
        }
        let full = self.h_prime.dot(&self.w);
        let e = cfg.hidden;
        let mut keys = Vec::with_capacity(cfg.layers);
        let mut values = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let base = 2 * l * e;
            keys.push(full.slice(s![.., base..base + e]).to_owned());
            values.push(full.slice(s![.., base + e..base + 2 * e]).to_owned());
        }
        Ok(PrefixParams {
            m_len: self.m_len(),
            keys,
            values,
        })
    }

    /// Chains gradients on the materialized prefix back to the factors:
    /// `d h_prime = dH w^T`, `d w = h_prime^T dH`, where `dH` is the packed
    /// `m_len x prefix_dim` gradient.
    pub fn grads_from_prefix(
        &self,
        cfg: &ModelConfig,
        prefix_grads: &PrefixParams<T>,
    ) -> Result<ReparamState<T>> {
        prefix_grads.validate(cfg)?;
        if prefix_grads.m_len != self.m_len() {
            return Err(Error::ShapeMismatch {
                name: "prefix gradient rows".to_string(),
                expected: format!("{}", self.m_len()),
                found: format!("{}", prefix_grads.m_len),
            });
        }
        let e = cfg.hidden;
        let mut dh = Array2::<T>::zeros((self.m_len(), cfg.prefix_dim()));
        for l in 0..cfg.layers {
            let base = 2 * l * e;
            dh.slice_mut(s![.., base..base + e])
                .assign(&prefix_grads.keys[l]);
            dh.slice_mut(s![.., base + e..base + 2 * e])
                .assign(&prefix_grads.values[l]);
        }
        Ok(ReparamState {
            h_prime: dh.dot(&self.w.t()),
            w: self.h_prime.t().dot(&dh),
        })
    }

    pub fn flat(&self) -> Vec<&[T]> {
        vec![
            self.h_prime.as_slice().expect("standard layout"),
            self.w.as_slice().expect("standard layout"),
        ]
    }

    pub fn flat_mut(&mut self) -> Vec<&mut [T]> {
        let ReparamState { h_prime, w } = self;
        vec![
            h_prime.as_slice_mut().expect("standard layout"),
            w.as_slice_mut().expect("standard layout"),
        ]
    }
}
