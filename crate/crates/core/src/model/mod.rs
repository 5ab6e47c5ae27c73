//! Network assembly, multi-domain training and hard negative mining.

mod config;
mod mining;
mod network;
mod train;

pub use config::{MinibatchConfig, OptimConfig, SanetConfig, StageConfig, StageGeometry};
pub use mining::{mine_hard_negatives, select_top_m};
pub use network::{Gradients, HeadTrace, ParamGroup, ParamInfo, Sanet, Scores, Stage, StageTrace, Trace};
pub(crate) use train::sample_indices;
pub use train::{
    backward_and_step, compute_gradients, compute_head_gradients, domain_accuracy, draw_minibatch,
    head_backward_and_step, train_multidomain, DomainDataset, IterationRecord, Sgd, StepStats,
    TrainBatch, TrainConfig, TrainLog, UpdateScope, BACKGROUND, TARGET,
};
