//! Optimizers, the restart/early-stopping schedule and the translation objective.

mod fit;
mod objective;
mod optim;

pub use fit::{
    finetune_sgd, fit, train_schedule, EpochRecord, Objective, Phase, TrainConfig, TrainLog,
};
pub use objective::{validate_perplexity, Seq2SeqObjective};
pub use optim::{adam_step, clip_gradients, AdamHyper, AdamState, Optimizer};
