//! Multi-agent DQN: one Q-network per action slot over the shared state.

mod checkpoint;
pub mod mlp;
pub mod optimizer;
mod pool;
pub mod replay;
mod train;

use thiserror::Error;

use crate::env::EnvError;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint};
pub use mlp::{Activation, DenseLayer, Gradients, MlpNetwork, Sample};
pub use optimizer::{Optimizer, OptimizerKind};
pub use pool::{decay_epsilon, Agent, AgentPool, Selection, StateEncoding};
pub use replay::ReplayBuffer;
pub use train::{train, train_with_env, Experience, TrainerConfig, TrainingRecord};

#[derive(Debug, Error)]
pub enum MadrlError {
    #[error("state has dimension {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action {action} outside the {outputs} network outputs")]
    ActionOutOfRange { action: usize, outputs: usize },
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite {0} during training")]
    NonFinite(&'static str),
    #[error("power flow failed {failures} times in a row (episode {episode})")]
    PersistentDivergence {
        episode: usize,
        failures: usize,
        #[source]
        last: EnvError,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint does not match this feeder: {0}")]
    Incompatible(String),
}
