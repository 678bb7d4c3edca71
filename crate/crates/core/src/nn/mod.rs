//! A small deterministic training engine: dense and convolutional layers,
//! softmax cross-entropy, and momentum SGD with optional update masks.

mod data;
mod layer;
mod loss;
mod network;
mod sgd;
mod train;

pub use data::Dataset;
pub use layer::{LayerSpec, WeightProduct};
pub use loss::softmax_cross_entropy;
pub use network::{check_architecture, forward_with, Gradients, LayerWeights, Network, Params};
pub use sgd::{sgd_step, zero_velocity, LrStep, SgdConfig};
pub use train::{count_top_k, evaluate, evaluate_with, mean_loss, train, train_with, Accuracy, EpochMetrics};
