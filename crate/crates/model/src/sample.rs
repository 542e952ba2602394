use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use talkplay_core::tokenizer::{TokenId, Vocabulary};
use talkplay_core::Modality;

use crate::transformer::{KvCache, Model};
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Values ≤ 0 select greedy argmax decoding.
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "top_p")]
    pub top_p: f64,
    #[serde(default = "one")]
    pub repetition_penalty: f64,
}

fn one() -> f64 {
    1.0
}
fn top_p() -> f64 {
    0.9
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 0.9,
            repetition_penalty: 1.0,
        }
    }
}

impl SamplingConfig {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ModelError::Config(format!("temperature must be finite and >= 0, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !self.repetition_penalty.is_finite() || self.repetition_penalty <= 0.0 {
            return Err(ModelError::Config(format!(
                "repetition_penalty must be finite and > 0, got {}",
                self.repetition_penalty
            )));
        }
        Ok(())
    }
}

/// Picks one id from `logits`. Entries at -inf are never chosen. The
/// repetition penalty touches each id of `generated` once.
pub fn sample_token(logits: &[f64], generated: &[TokenId], cfg: &SamplingConfig, rng: &mut impl Rng) -> TokenId {
    let mut z = logits.to_vec();
    if cfg.repetition_penalty != 1.0 && cfg.repetition_penalty > 0.0 {
        let mut seen = generated.to_vec();
        seen.sort_unstable();
        seen.dedup();
        for id in seen {
            if let Some(v) = z.get_mut(id as usize) {
                if v.is_finite() {
                    *v = if *v > 0.0 { *v / cfg.repetition_penalty } else { *v * cfg.repetition_penalty };
                }
            }
        }
    }
    let argmax = || {
        let mut best = 0;
        for (i, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = i;
            }
        }
        best as TokenId
    };
    if cfg.temperature <= 0.0 || cfg.top_p <= 0.0 {
        return argmax();
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return argmax();
    }
    let mut probs: Vec<f64> = z.iter().map(|&v| ((v - max) / cfg.temperature).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut kept = 0;
    let mut mass = 0.0;
    for &i in &order {
        mass += probs[i];
        kept += 1;
        if mass >= cfg.top_p {
            break;
        }
    }
    let mut u = rng.random::<f64>() * mass;
    for &i in &order[..kept] {
        u -= probs[i];
        if u < 0.0 {
            return i as TokenId;
        }
    }
    order[kept - 1] as TokenId
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockState {
    Outside,
    Slot(usize),
    NeedEom,
}

/// Constrains decoding so music tokens only appear as complete
/// `som, 5 modality slots, eom` blocks.
#[derive(Debug, Clone)]
pub struct MusicGrammar {
    vocab: Vocabulary,
}

impl MusicGrammar {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }

    fn advance(&self, state: BlockState, id: TokenId) -> BlockState {
        match state {
            BlockState::Outside if id == self.vocab.som() => BlockState::Slot(0),
            BlockState::Outside => BlockState::Outside,
            BlockState::Slot(s) if s + 1 < Modality::COUNT => BlockState::Slot(s + 1),
            BlockState::Slot(_) => BlockState::NeedEom,
            BlockState::NeedEom => BlockState::Outside,
        }
    }

    fn allowed(&self, state: BlockState, id: TokenId) -> bool {
        let v = &self.vocab;
        match state {
            BlockState::Outside => {
                let music = v.music_start()..v.music_start() + v.music_len();
                !music.contains(&id) && id != v.eom() && id != v.playlist_unk()
            }
            BlockState::Slot(s) => v.modality_range(Modality::ALL[s]).contains(&id),
            BlockState::NeedEom => id == v.eom(),
        }
    }
}

/// Incremental decoder over a KV cache.
pub struct Decoder<'a> {
    model: &'a Model<f32>,
    grammar: Option<&'a MusicGrammar>,
    cache: KvCache<f32>,
    logits: Vec<f32>,
    state: BlockState,
    generated: Vec<TokenId>,
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a Model<f32>, prompt: &[TokenId], grammar: Option<&'a MusicGrammar>) -> Result<Self, ModelError> {
        if prompt.is_empty() {
            return Err(ModelError::Shape("empty prompt".into()));
        }
        let ctx = model.config().context_len;
        if prompt.len() > ctx {
            return Err(ModelError::TooLong {
                len: prompt.len(),
                context: ctx,
            });
        }
        let mut d = Self {
            model,
            grammar,
            cache: model.new_cache(),
            logits: Vec::new(),
            state: BlockState::Outside,
            generated: Vec::new(),
        };
        for &t in prompt {
            d.feed(t)?;
        }
        Ok(d)
    }

    fn feed(&mut self, id: TokenId) -> Result<(), ModelError> {
        self.logits = self.model.step(id, &mut self.cache)?;
        if let Some(g) = self.grammar {
            self.state = g.advance(self.state, id);
        }
        Ok(())
    }

    /// Positions left before the context is full.
    pub fn room(&self) -> usize {
        self.model.config().context_len - self.cache.len()
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.generated
    }

    /// Samples the next id. It is fed back unless the context is full.
    pub fn next(&mut self, cfg: &SamplingConfig, rng: &mut impl Rng) -> Result<TokenId, ModelError> {
        let mut z: Vec<f64> = self.logits.iter().map(|&v| v as f64).collect();
        if let Some(g) = self.grammar {
            for (i, v) in z.iter_mut().enumerate() {
                if !g.allowed(self.state, i as TokenId) {
                    *v = f64::NEG_INFINITY;
                }
            }
        }
        let id = sample_token(&z, &self.generated, cfg, rng);
        self.accept(id)?;
        Ok(id)
    }

    /// Appends a caller-chosen id as if it had been generated.
    pub fn force(&mut self, id: TokenId) -> Result<(), ModelError> {
        if id as usize >= self.model.config().vocab_size {
            return Err(ModelError::TokenOutOfRange(id));
        }
        self.accept(id)
    }

    fn accept(&mut self, id: TokenId) -> Result<(), ModelError> {
        self.generated.push(id);
        if self.room() > 0 {
            self.feed(id)
        } else {
            if let Some(g) = self.grammar {
                self.state = g.advance(self.state, id);
            }
            Ok(())
        }
    }
}

/// Samples up to `max_new` ids after `prompt`, stopping early after any id
/// in `stop` or when the context is full. Returns the new ids only.
pub fn generate(
    model: &Model<f32>,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    grammar: Option<&MusicGrammar>,
    max_new: usize,
    stop: &[TokenId],
    seed: u64,
) -> Result<Vec<TokenId>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dec = Decoder::new(model, prompt, grammar)?;
    for _ in 0..max_new {
        let full = dec.room() == 0;
        let id = dec.next(cfg, &mut rng)?;
        if full || stop.contains(&id) {
            break;
        }
    }
    Ok(dec.generated.clone())
}
