//! Feed-forward networks, optimizers, training and curvature probes.

mod hessian;
mod network;
mod optim;
mod train;

pub use hessian::{
    hessian_block, hessian_probe, LabeledLoss, DEFAULT_PROBE_STEP, MAX_PROBE_PARAMS,
};
pub use network::{
    Activation, ForwardCache, Gradients, InitRecord, InitScheme, MlpNetwork, UNIFORM_INIT_BOUND,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use train::{
    clean_accuracy, evaluate_noisy, split_train_validation, train, EpochRecord, TrainConfig,
    TrainHistory, TrainOutcome,
};
