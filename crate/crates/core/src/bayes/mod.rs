//! Bayes-by-Backprop multilayer perceptron with software and crossbar inference.

mod checkpoint;
mod elbo;
mod hardware;
mod layer;
mod net;
mod predict;
mod train;

pub use checkpoint::{Checkpoint, LayerRecord, TrainingRecord, CHECKPOINT_FORMAT};
pub use elbo::{elbo_loss, elbo_loss_with_noise, ElboOutput, ElboTerms};
pub use hardware::{
    hardware_evaluate, hardware_predict, hardware_predict_dataset, HardwareConfig, HardwareExport,
    HardwareNet, LayerExport, ProgrammedLayer, CONDUCTANCE_FORMAT,
};
pub use layer::{log_gaussian_from_noise, sigmoid, softplus, PriorSpec, VariationalLayer};
pub use net::{quantize_unit, saturated_linear, softmax_rows, BayesNet};
pub use predict::{accuracy, evaluate, predict, predict_batch, PredictiveOutput};
pub use train::{init_network, train, Adam, EpochMetrics, TrainConfig, TrainLog};
