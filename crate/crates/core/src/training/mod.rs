//! Supervised training of ResNet systems.

pub mod bfgs;
pub mod dataset;
pub mod init;
pub mod objective;
pub mod trainer;

pub use bfgs::{bfgs_minimize, bfgs_minimize_with, BfgsOptions, BfgsReport, Termination};
pub use dataset::Dataset;
pub use init::box_init;
pub use objective::{bias_order_penalty, data_loss, max_bias_violation, regularizer, Objective};
pub use trainer::{
    init_system, train_net, train_system, NetTrainReport, TrainConfig, TrainHistory,
};
