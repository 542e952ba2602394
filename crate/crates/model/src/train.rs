use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use talkplay_core::eval::derive_seed;
use talkplay_core::tokenizer::{TokenId, Vocabulary};

use crate::config::{LossMaskMode, TrainConfig};
use crate::transformer::Model;
use crate::ModelError;

/// One training window. `mask[i]` selects `ids[i]` as a target; `mask[0]`
/// is never used.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub ids: Vec<TokenId>,
    pub mask: Vec<bool>,
}

impl Example {
    pub fn all(ids: Vec<TokenId>) -> Self {
        let mask = vec![true; ids.len()];
        Self { ids, mask }
    }

    fn n_targets(&self) -> usize {
        self.mask.iter().skip(1).filter(|m| **m).count()
    }
}

/// Splits token sequences into context-sized windows. Consecutive windows
/// share one token so every target is predicted exactly once.
pub fn build_examples(
    sequences: &[Vec<TokenId>],
    vocab: &Vocabulary,
    mode: LossMaskMode,
    context_len: usize,
) -> Vec<Example> {
    assert!(context_len >= 2);
    let mut out = Vec::new();
    for seq in sequences {
        if seq.len() < 2 {
            continue;
        }
        let mask = match mode {
            LossMaskMode::All => vec![true; seq.len()],
            LossMaskMode::ResponseAndMusic => vocab.response_and_music_mask(seq),
        };
        let mut start = 0;
        loop {
            let end = (start + context_len).min(seq.len());
            out.push(Example {
                ids: seq[start..end].to_vec(),
                mask: mask[start..end].to_vec(),
            });
            if end == seq.len() {
                break;
            }
            start = end - 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<f32>,
    #[serde(skip)]
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-target loss before the first update.
    pub initial_loss: Option<f64>,
    /// Mean per-target loss of each finished epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub adam: AdamState,
    pub report: TrainReport,
}

impl TrainState {
    pub fn new(model: Model<f32>) -> Self {
        let n = model.n_params();
        Self {
            model,
            adam: AdamState::new(n),
            report: TrainReport::default(),
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.report.epoch_losses.len()
    }
}

fn mean_loss(model: &Model<f32>, examples: &[Example]) -> Result<f64, ModelError> {
    let (mut sum, mut count) = (0.0, 0usize);
    for ex in examples {
        let c = ex.n_targets();
        if c > 0 {
            sum += model.loss(&ex.ids, &ex.mask)? * c as f64;
            count += c;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Trains until `config.epochs` epochs are done in total. Each epoch visits
/// the examples in an order drawn from (seed, epoch), so a resumed run
/// repeats the uninterrupted one. `on_epoch` sees (epoch index, mean loss).
pub fn train(
    state: &mut TrainState,
    examples: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(), ModelError> {
    config.validate()?;
    if examples.is_empty() || examples.iter().all(|e| e.n_targets() == 0) {
        return Err(ModelError::EmptyCorpus);
    }
    let n_params = state.model.n_params();
    if state.adam.m.len() != n_params || state.adam.v.len() != n_params {
        return Err(ModelError::Shape("optimizer state does not match the model".into()));
    }
    if state.report.initial_loss.is_none() {
        let l = mean_loss(&state.model, examples)?;
        if !l.is_finite() {
            return Err(ModelError::Diverged { epoch: 0, step: 0, loss: l });
        }
        state.report.initial_loss = Some(l);
    }
    let decay = state.model.layout().decay_mask();
    let mut grads = vec![0.0f32; n_params];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in state.epochs_done()..config.epochs {
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, 0));
        order.shuffle(&mut rng);
        let (mut ep_sum, mut ep_count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let targets: usize = batch.iter().map(|&i| examples[i].n_targets()).sum();
            if targets == 0 {
                continue;
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / targets as f32;
            let mut batch_sum = 0.0;
            for &i in batch {
                let ex = &examples[i];
                let (s, _) = state.model.accumulate(&ex.ids, &ex.mask, scale, &mut grads)?;
                batch_sum += s;
            }
            let batch_loss = batch_sum / targets as f64;
            if !batch_loss.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    step: state.adam.step as usize,
                    loss: batch_loss,
                });
            }
            ep_sum += batch_sum;
            ep_count += targets;
            adamw_step(&mut state.model.params, &grads, &decay, &mut state.adam, config);
        }
        let mean = ep_sum / ep_count.max(1) as f64;
        log::info!("epoch {} loss {:.4}", epoch + 1, mean);
        state.report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(())
}

fn adamw_step(params: &mut [f32], grads: &[f32], decay: &[bool], adam: &mut AdamState, cfg: &TrainConfig) {
    let norm = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
    let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
        (cfg.grad_clip / norm) as f32
    } else {
        1.0
    };
    adam.step += 1;
    let t = adam.step as i32;
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let step = (cfg.learning_rate / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    let lr = cfg.learning_rate as f32;
    let wd = cfg.weight_decay as f32;
    let eps = cfg.eps as f32;
    for i in 0..params.len() {
        let g = grads[i] * clip;
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
        if decay[i] {
            params[i] -= lr * wd * params[i];
        }
        params[i] -= step * adam.m[i] / (adam.v[i].sqrt() / bc2_sqrt + eps);
    }
}
