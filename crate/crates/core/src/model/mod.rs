//! A small decoder-only language model with hand-written forward and
//! backward passes, plus the trainable attention prefix that this crate's
//! training pipeline optimizes while the base weights stay frozen.

mod backward;
mod checkpoint;
mod config;
mod forward;
mod logprob;
mod params;
mod prefix;
mod sample;
mod vocab;

pub use backward::{backward, ModelGrads};
pub(crate) use checkpoint::{expect_a1 as checkpoint_a1, expect_a2 as checkpoint_a2};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::ModelConfig;
pub use forward::{forward, forward_with_prefix, ForwardTrace};
pub use logprob::{
    log_softmax_row, masked_logprob, masked_logprob_from_trace, sequence_logprob, token_logprobs,
};
pub use params::{BaseParams, LayerParams, INIT_SCALE, LN_EPS};
pub use prefix::{PrefixParams, ReparamState};
pub use sample::{generate, SampleConfig};
pub use vocab::{Vocab, BOS, EOS};
