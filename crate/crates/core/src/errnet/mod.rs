//! Reconstruction error network: a small convolutional regressor from LR
//! features to a per-pixel HR error score, with hand-written backpropagation.

mod conv;
mod features;
mod io;
mod model;
mod optim;
mod train;

pub use features::{extract_features, FeatureMap, FeatureMode};
pub use io::{decode_params, encode_params, load_params, save_params, ENET_MAGIC, ENET_VERSION};
pub use model::{
    forward, loss, loss_and_gradients, predict, relu_pattern, update_running_stats, Architecture, BatchStats, BlockOrder,
    BlockParams, ErrNetParams, Gradients, LossAndGrads, Mode, BN_EPS, BN_MOMENTUM, FLAG_BN_BEFORE_RELU,
};
pub use optim::{cosine_lr, AdamConfig, AdamState};
pub use train::{backward_step, train, BatchUnit, TrainConfig, TrainReport, TrainSample};
