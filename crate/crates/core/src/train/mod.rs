//! Optimization: configuration, loss, Adam and the training loop.

pub mod config;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use config::{Config, Precision, TrainConfig};
pub use loss::{batch_loss, LossOutput};
pub use optim::{lr_schedule, Adam};
pub use trainer::{StepStats, TrainReport, Trainer};
