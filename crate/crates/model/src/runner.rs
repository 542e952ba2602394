use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use talkplay_core::eval::{GenerationError, MusicGenerator};
use talkplay_core::tokenizer::{MusicTokenSeq, TokenId, Vocabulary};
use talkplay_core::Modality;

use crate::sample::{Decoder, MusicGrammar, SamplingConfig};
use crate::transformer::Model;
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConfig {
    #[serde(default)]
    pub sampling: SamplingConfig,
    /// Upper bound on generated response bytes.
    #[serde(default = "max_response_bytes")]
    pub max_response_bytes: usize,
}

fn max_response_bytes() -> usize {
    160
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            max_response_bytes: max_response_bytes(),
        }
    }
}

/// A trained model bound to its vocabulary. Immutable; each call owns its
/// sampler state and seed, so it can serve concurrent requests.
#[derive(Debug, Clone)]
pub struct ModelRunner {
    model: Model<f32>,
    vocab: Vocabulary,
    grammar: MusicGrammar,
    config: RunnerConfig,
    fingerprint: String,
}

const MUSIC_BLOCK: usize = 2 + Modality::COUNT;

fn fnv64(params: &[f32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for b in p.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl ModelRunner {
    pub fn new(model: Model<f32>, vocab: Vocabulary, config: RunnerConfig) -> Result<Self, ModelError> {
        if model.config().vocab_size != vocab.size() as usize {
            return Err(ModelError::Config(format!(
                "model vocabulary {} differs from tokenizer vocabulary {}",
                model.config().vocab_size,
                vocab.size()
            )));
        }
        let fingerprint = format!("{:016x}", fnv64(&model.params));
        Ok(Self {
            model,
            grammar: MusicGrammar::new(vocab),
            vocab,
            config,
            fingerprint,
        })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    fn truncate<'p>(&self, prompt: &'p [TokenId], reserve: usize) -> &'p [TokenId] {
        let keep = self.model.config().context_len.saturating_sub(reserve).max(1);
        &prompt[prompt.len().saturating_sub(keep)..]
    }

    fn music_block(
        &self,
        dec: &mut Decoder<'_>,
        sampling: &SamplingConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<MusicTokenSeq, ModelError> {
        dec.force(self.vocab.som())?;
        let mut ids = [0; Modality::COUNT];
        for slot in ids.iter_mut() {
            *slot = dec.next(sampling, rng)?;
        }
        dec.force(self.vocab.eom())?;
        Ok(MusicTokenSeq(ids))
    }

    /// Music block for the turn ending `prompt`. Long prompts keep their
    /// most recent tokens.
    pub fn recommend(&self, prompt: &[TokenId], seed: u64) -> Result<MusicTokenSeq, ModelError> {
        let prompt = self.truncate(prompt, MUSIC_BLOCK);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dec = Decoder::new(&self.model, prompt, Some(&self.grammar))?;
        self.music_block(&mut dec, &self.config.sampling, &mut rng)
    }

    /// Music block followed by the assistant's text, which ends at the next
    /// role or music marker, the byte limit, or the context end.
    pub fn respond(&self, prompt: &[TokenId], seed: u64) -> Result<(MusicTokenSeq, String), ModelError> {
        self.respond_with(prompt, seed, &self.config.sampling)
    }

    /// [`Self::respond`] with explicit sampling settings.
    pub fn respond_with(
        &self,
        prompt: &[TokenId],
        seed: u64,
        sampling: &SamplingConfig,
    ) -> Result<(MusicTokenSeq, String), ModelError> {
        sampling.validate()?;
        let ctx = self.model.config().context_len;
        let text_budget = self.config.max_response_bytes.min(ctx / 2);
        let prompt = self.truncate(prompt, MUSIC_BLOCK + 1 + text_budget);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dec = Decoder::new(&self.model, prompt, Some(&self.grammar))?;
        let seq = self.music_block(&mut dec, sampling, &mut rng)?;
        dec.force(self.vocab.assistant())?;
        let mut bytes = Vec::new();
        while bytes.len() < self.config.max_response_bytes && dec.room() > 0 {
            let id = dec.next(sampling, &mut rng)?;
            if id >= self.vocab.base_size() {
                break;
            }
            bytes.push(id);
        }
        Ok((seq, self.vocab.decode_text(&bytes).trim().to_string()))
    }
}

impl MusicGenerator for ModelRunner {
    fn generate_music(&self, prompt: &[TokenId], seed: u64) -> Result<Option<MusicTokenSeq>, GenerationError> {
        self.recommend(prompt, seed)
            .map(Some)
            .map_err(|e| GenerationError(e.to_string()))
    }

    fn fingerprint(&self) -> String {
        format!("model:{}", self.fingerprint)
    }
}
