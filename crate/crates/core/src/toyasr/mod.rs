//! Desk-scale self-training on a synthetic frame-classification task.

mod data;
mod decode;
mod experiment;
mod model;

pub use data::{generate_dataset, SyntheticTask, Utterance};
pub use decode::{decode_nbest, greedy_decode, prefix_beam_search};
pub use experiment::{
    conditions, evaluate, self_train_experiment, Condition, ConditionResult, ExperimentConfig, Report,
    Supervision,
};
pub use model::{mean_loss, train, Example, FrameModel, Params, TrainConfig, TrainStats};
