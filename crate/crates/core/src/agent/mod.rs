//! DQN agent: replay memory, TD targets, batch gradients over every
//! learnable parameter, action selection, the training loop and evaluation.

mod config;
mod learner;
mod replay;
mod train;

pub use config::TrainConfig;
pub use learner::{batch_loss, batch_loss_and_grads, select_action, target_sync, td_target, BatchOutcome, LossOptions};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate, train_loop, Clock, EvalOptions, EvalStats, MetricsRow, RngStreams, Trainer};
