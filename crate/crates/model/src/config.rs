use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    #[serde(default = "d_model")]
    pub d_model: usize,
    #[serde(default = "n_layers")]
    pub n_layers: usize,
    #[serde(default = "n_heads")]
    pub n_heads: usize,
    #[serde(default = "context_len")]
    pub context_len: usize,
    #[serde(default)]
    pub seed: u64,
}

fn d_model() -> usize {
    128
}
fn n_layers() -> usize {
    4
}
fn n_heads() -> usize {
    4
}
fn context_len() -> usize {
    256
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: d_model(),
            n_layers: n_layers(),
            n_heads: n_heads(),
            context_len: context_len(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.context_len < 8 {
            return bad("context_len must be at least 8");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Which target positions contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMaskMode {
    /// Every next-token target.
    #[default]
    All,
    /// Music blocks and assistant responses only.
    ResponseAndMusic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "batch_size")]
    pub batch_size: usize,
    #[serde(default = "epochs")]
    pub epochs: usize,
    #[serde(default = "weight_decay")]
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[serde(default = "grad_clip")]
    pub grad_clip: f64,
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "eps")]
    pub eps: f64,
    #[serde(default)]
    pub loss_mask: LossMaskMode,
    #[serde(default)]
    pub seed: u64,
}

fn learning_rate() -> f64 {
    1e-4
}
fn batch_size() -> usize {
    8
}
fn epochs() -> usize {
    10
}
fn weight_decay() -> f64 {
    0.01
}
fn grad_clip() -> f64 {
    1.0
}
fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: learning_rate(),
            batch_size: batch_size(),
            epochs: epochs(),
            weight_decay: weight_decay(),
            grad_clip: grad_clip(),
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
            loss_mask: LossMaskMode::All,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 || self.eps <= 0.0 {
            return bad("weight_decay and grad_clip must be non-negative, eps positive");
        }
        Ok(())
    }
}
