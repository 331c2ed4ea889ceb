//! Model hyperparameters.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_context: usize,
}

impl ModelConfig {
    /// Desk-scale decoder used throughout the synthetic pipeline.
    pub fn toy(vocab: usize) -> Self {
        ModelConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            vocab,
            max_context: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.hidden == 0
            || self.heads == 0
            || self.vocab == 0
            || self.max_context == 0
        {
            return Err(Error::InvalidParameter(
                "model dimensions must be positive".to_string(),
            ));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Width of one materialized prefix row: a key row and a value row for
    /// every layer.
    pub fn prefix_dim(&self) -> usize {
        2 * self.layers * self.hidden
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.hidden
    }
}
