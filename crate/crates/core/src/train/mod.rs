//! Losses, optimizers and training loops: base-model pretraining,
//! comparative prefix training on preference pairs, the optional NLL
//! refinement stage, and a finite-difference gradient checker.

mod adamw;
mod basic;
mod comparative;
mod gradcheck;
mod losses;
mod pretrain;

pub use adamw::{global_norm, AdamW, AdamWConfig};
pub use basic::train_basic;
pub use comparative::{
    compare_margins, evaluate_pairs, load_trainer_state, mean_common_kl, new_optimizer,
    save_trainer_state, train_comparative, DatasetEval, MarginComparison, TrainConfig,
    TrainRecord, TrainSummary,
};
pub use gradcheck::{grad_check, CoordError, GradCheckOptions, GradCheckReport};
pub use losses::{
    common_kl_stats, instance_loss, instance_loss_and_grads, instance_margin, kl_divergence,
    rank_loss, sigmoid,
    softplus, EncodedInstance, KlScope, LossBreakdown, LossWeights,
};
pub use pretrain::{corpus_nll, train_base, PretrainConfig, PretrainRecord};
