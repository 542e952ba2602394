//! Turn-wise evaluation with teacher-forced history.
//!
//! Evaluation runs in two phases. [`generate_queries`] asks the generator for
//! one music block per exchange; [`score_generations`] ranks the catalog for
//! those blocks under a weight profile. Ablations reuse one set of
//! generations across many profiles.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::bm25::Bm25Index;
use super::metrics::{hit_at_k, mrr, MetricError};
use crate::datasynth::{validate_conversation, Conversation, Exchange, TrackResolver, Turn};
use crate::retrieval::{TokenIndex, WeightProfile};
use crate::tokenizer::{ItemTokenLookup, MusicTokenSeq, TokenId, TokenizerError, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("generation failed: {0}")]
pub struct GenerationError(pub String);

/// Anything that can propose a music block after a prompt.
pub trait MusicGenerator {
    /// `prompt` ends with the current user query; the generator appends
    /// `<start_of_music>` itself. `Ok(None)` means no valid block was produced.
    fn generate_music(&self, prompt: &[TokenId], seed: u64) -> Result<Option<MusicTokenSeq>, GenerationError>;

    /// Identifies the model (e.g. a checkpoint hash) in report fingerprints.
    fn fingerprint(&self) -> String;
}

impl<G: MusicGenerator + ?Sized> MusicGenerator for &G {
    fn generate_music(&self, prompt: &[TokenId], seed: u64) -> Result<Option<MusicTokenSeq>, GenerationError> {
        (**self).generate_music(prompt, seed)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no evaluable queries")]
    NoQueries,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub weights: WeightProfile,
    pub top_n: usize,
    pub seed: u64,
    /// Drop the conversation's earlier ground-truth tracks from later turns.
    pub exclude_previous: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weights: WeightProfile::default(),
            top_n: 100,
            seed: 0,
            exclude_previous: true,
        }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for query (`a`, `b`) under a base seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(base) ^ a) ^ b)
}

/// Tokens of the ground-truth history followed by the user query. The
/// generator continues from here with a music block.
pub fn render_turn_prompt(
    vocab: &Vocabulary,
    history: &[Exchange<'_>],
    query: &str,
    items: &impl ItemTokenLookup,
) -> Result<Vec<TokenId>, TokenizerError> {
    let mut turns = Vec::with_capacity(history.len() * 3);
    for e in history {
        turns.push(Turn::user(e.user));
        turns.push(Turn::music(e.track_id));
        turns.push(Turn::assistant(e.assistant));
    }
    let prefix = Conversation {
        conversation_id: String::new(),
        source_playlist_id: String::new(),
        turns,
    };
    let mut ids = vocab.render_conversation(&prefix, items)?;
    ids.push(vocab.user());
    ids.extend(vocab.encode_text(query));
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedConversation {
    pub conversation_id: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub conversation_id: String,
    /// 0-based exchange index within the conversation.
    pub turn: usize,
    pub query: String,
    pub target: String,
    pub exclude: Vec<String>,
    pub generated: Option<MusicTokenSeq>,
}

/// Output of the generation phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generations {
    pub queries: Vec<GeneratedQuery>,
    pub skipped: Vec<SkippedConversation>,
    pub generator: String,
    pub seed: u64,
    pub exclude_previous: bool,
    pub n_conversations: usize,
}

/// Splits conversations into evaluable ones and skipped ones, and expands
/// the evaluable ones into per-turn queries (without generations).
fn expand(
    conversations: &[Conversation],
    tracks: &impl TrackResolver,
    exclude_previous: bool,
) -> (Vec<(usize, GeneratedQuery)>, Vec<SkippedConversation>) {
    let mut queries = Vec::new();
    let mut skipped = Vec::new();
    for (ci, conv) in conversations.iter().enumerate() {
        let conv = conv.normalized();
        if let Err(v) = validate_conversation(&conv, tracks) {
            log::warn!("skipping conversation {}: {} violation(s)", conv.conversation_id, v.len());
            skipped.push(SkippedConversation {
                conversation_id: conv.conversation_id.clone(),
                reasons: v.iter().map(|x| x.to_string()).collect(),
            });
            continue;
        }
        let ex = conv.exchanges();
        for (t, e) in ex.iter().enumerate() {
            let exclude = if exclude_previous {
                let mut seen = HashSet::new();
                ex[..t]
                    .iter()
                    .map(|p| p.track_id.to_string())
                    .filter(|id| id != e.track_id && seen.insert(id.clone()))
                    .collect()
            } else {
                Vec::new()
            };
            queries.push((
                ci,
                GeneratedQuery {
                    conversation_id: conv.conversation_id.clone(),
                    turn: t,
                    query: e.user.to_string(),
                    target: e.track_id.to_string(),
                    exclude,
                    generated: None,
                },
            ));
        }
    }
    (queries, skipped)
}

/// Phase one: one grammar-constrained music block per exchange.
pub fn generate_queries<G: MusicGenerator + ?Sized>(
    generator: &G,
    index: &TokenIndex,
    conversations: &[Conversation],
    seed: u64,
    exclude_previous: bool,
) -> Result<Generations, EvalError> {
    let (expanded, skipped) = expand(conversations, index, exclude_previous);
    let mut queries = Vec::with_capacity(expanded.len());
    let normalized: Vec<Conversation> = conversations.iter().map(|c| c.normalized()).collect();
    for (ci, mut q) in expanded {
        let ex = normalized[ci].exchanges();
        let prompt = render_turn_prompt(index.vocab(), &ex[..q.turn], &q.query, index)?;
        q.generated = generator.generate_music(&prompt, derive_seed(seed, ci as u64, q.turn as u64))?;
        queries.push(q);
    }
    Ok(Generations {
        queries,
        skipped,
        generator: generator.fingerprint(),
        seed,
        exclude_previous,
        n_conversations: conversations.len(),
    })
}

/// Provenance of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    /// `generative` or `bm25`.
    pub method: String,
    pub generator: String,
    pub weights: Option<WeightProfile>,
    pub seed: u64,
    pub top_n: usize,
    pub exclude_previous: bool,
    pub n_conversations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLog {
    pub conversation_id: String,
    pub turn: usize,
    pub target: String,
    /// Surface form of the generated block, if any.
    pub generated: Option<String>,
    pub top1: Option<String>,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hit_at_1: f64,
    pub hit_at_10: f64,
    pub hit_at_100: f64,
    pub n_queries: usize,
    /// MRR of the queries at each 0-based exchange index.
    pub per_turn_mrr: Vec<f64>,
    pub per_turn_count: Vec<usize>,
    pub queries: Vec<QueryLog>,
    pub skipped: Vec<SkippedConversation>,
    pub fingerprint: Fingerprint,
}

impl EvalReport {
    pub fn from_logs(
        queries: Vec<QueryLog>,
        skipped: Vec<SkippedConversation>,
        fingerprint: Fingerprint,
    ) -> Result<Self, EvalError> {
        if queries.is_empty() {
            return Err(EvalError::NoQueries);
        }
        let ranks: Vec<Option<usize>> = queries.iter().map(|q| q.rank).collect();
        let n_turns = queries.iter().map(|q| q.turn + 1).max().unwrap_or(0);
        let mut per_turn_mrr = Vec::with_capacity(n_turns);
        let mut per_turn_count = Vec::with_capacity(n_turns);
        for t in 0..n_turns {
            let r: Vec<Option<usize>> = queries.iter().filter(|q| q.turn == t).map(|q| q.rank).collect();
            per_turn_count.push(r.len());
            per_turn_mrr.push(if r.is_empty() { 0.0 } else { mrr(&r)? });
        }
        Ok(Self {
            mrr: mrr(&ranks)?,
            hit_at_1: hit_at_k(&ranks, 1)?,
            hit_at_10: hit_at_k(&ranks, 10)?,
            hit_at_100: hit_at_k(&ranks, 100)?,
            n_queries: ranks.len(),
            per_turn_mrr,
            per_turn_count,
            queries,
            skipped,
            fingerprint,
        })
    }

    pub fn ranks(&self) -> Vec<Option<usize>> {
        self.queries.iter().map(|q| q.rank).collect()
    }
}

/// Phase two: rank the catalog for every generated block.
pub fn score_generations(
    gens: &Generations,
    index: &TokenIndex,
    weights: &WeightProfile,
    top_n: usize,
) -> Result<EvalReport, EvalError> {
    let mut logs = Vec::with_capacity(gens.queries.len());
    for q in &gens.queries {
        let (rank, top1, surface) = match &q.generated {
            Some(seq) => {
                let exclude: HashSet<String> = q.exclude.iter().cloned().collect();
                let ranked = index.recommend(seq, weights, top_n, &exclude);
                (
                    ranked.rank_of(&q.target),
                    ranked.0.first().map(|s| s.track_id.clone()),
                    Some(index.vocab().item_surface(seq)?),
                )
            }
            None => (None, None, None),
        };
        logs.push(QueryLog {
            conversation_id: q.conversation_id.clone(),
            turn: q.turn,
            target: q.target.clone(),
            generated: surface,
            top1,
            rank,
        });
    }
    EvalReport::from_logs(
        logs,
        gens.skipped.clone(),
        Fingerprint {
            method: "generative".into(),
            generator: gens.generator.clone(),
            weights: Some(*weights),
            seed: gens.seed,
            top_n,
            exclude_previous: gens.exclude_previous,
            n_conversations: gens.n_conversations,
        },
    )
}

/// Generates and scores in one go.
pub fn evaluate_turnwise<G: MusicGenerator + ?Sized>(
    generator: &G,
    index: &TokenIndex,
    conversations: &[Conversation],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let gens = generate_queries(generator, index, conversations, config.seed, config.exclude_previous)?;
    score_generations(&gens, index, &config.weights, config.top_n)
}

/// Text baseline: each turn's user query alone is matched against track docs.
pub fn evaluate_bm25(
    bm25: &Bm25Index,
    tracks: &impl TrackResolver,
    conversations: &[Conversation],
    top_n: usize,
    exclude_previous: bool,
) -> Result<EvalReport, EvalError> {
    let (expanded, skipped) = expand(conversations, tracks, exclude_previous);
    let mut logs = Vec::with_capacity(expanded.len());
    for (_, q) in expanded {
        let exclude: HashSet<String> = q.exclude.into_iter().collect();
        let ranked = bm25.rank(&q.query, top_n, &exclude);
        logs.push(QueryLog {
            rank: ranked.rank_of(&q.target),
            top1: ranked.0.first().map(|s| s.track_id.clone()),
            conversation_id: q.conversation_id,
            turn: q.turn,
            target: q.target,
            generated: None,
        });
    }
    EvalReport::from_logs(
        logs,
        skipped,
        Fingerprint {
            method: "bm25".into(),
            generator: "bm25".into(),
            weights: None,
            seed: 0,
            top_n,
            exclude_previous,
            n_conversations: conversations.len(),
        },
    )
}
