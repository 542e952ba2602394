//! Decoder-only transformer over the expanded music vocabulary: parameter
//! initialization, training, sampling and checkpoints.

mod checkpoint;
mod config;
mod init;
mod params;
mod runner;
mod sample;
mod scalar;
mod train;
mod transformer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{LossMaskMode, ModelConfig, TrainConfig};
pub use init::{cholesky_psd, init_expanded, init_params, BaseStats, Covariance};
pub use params::{Layout, TensorInfo};
pub use runner::{ModelRunner, RunnerConfig};
pub use sample::{generate, sample_token, Decoder, MusicGrammar, SamplingConfig};
pub use scalar::Scalar;
pub use train::{build_examples, train, AdamState, Example, TrainReport, TrainState};
pub use transformer::{KvCache, Model};

use talkplay_core::tokenizer::TokenId;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence of {len} tokens exceeds context length {context}")]
    TooLong { len: usize, context: usize },
    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfRange(TokenId),
    #[error("covariance is not positive semi-definite (pivot {pivot} at row {row})")]
    NotPsd { row: usize, pivot: f64 },
    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
