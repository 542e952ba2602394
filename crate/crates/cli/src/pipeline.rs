//! Steps shared by the command line and the end-to-end check: codebook
//! fitting, item tokenization, corpus rendering, model training and the
//! planted-structure run that strings them together.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use talkplay_core::catalog::{chronological_split, Catalog, CatalogSplit, EmbeddingMatrix, Playlist};
use talkplay_core::datasynth::{synthesize_rule_based, Conversation, RuleSynthParams};
use talkplay_core::eval::{derive_seed, evaluate_bm25, evaluate_turnwise, Bm25Index, Bm25Params, EvalConfig, EvalReport};
use talkplay_core::fixture::{generate_catalog, SyntheticCatalogConfig};
use talkplay_core::quantizer::{fit_kmeans, Codebook, KMeansParams};
use talkplay_core::retrieval::{TokenIndex, WeightProfile};
use talkplay_core::tokenizer::{tokenize_items, MusicTokenSeq, Vocabulary};
use talkplay_core::Modality;
use talkplay_model::{
    build_examples, init_expanded, train, ModelConfig, ModelRunner, RunnerConfig, TrainConfig, TrainReport,
    TrainState,
};

use crate::corpus::TokenCorpus;

/// One codebook per matrix. Each modality gets its own seed stream.
pub fn fit_codebooks(matrices: &[EmbeddingMatrix], k: usize, seed: u64) -> Result<Vec<Codebook>> {
    matrices
        .iter()
        .map(|m| {
            let params = KMeansParams {
                k,
                seed: derive_seed(seed, m.modality().index() as u64, 0),
                ..KMeansParams::default()
            };
            let fit = fit_kmeans(m, &params).with_context(|| format!("fitting {} codebook", m.modality()))?;
            Ok(fit.codebook)
        })
        .collect()
}

/// Keeps only rows of tracks that occur in `playlists`.
pub fn restrict_rows(matrix: &EmbeddingMatrix, playlists: &[&Playlist]) -> Result<EmbeddingMatrix> {
    let keep: std::collections::HashSet<&str> =
        playlists.iter().flat_map(|p| p.track_ids.iter().map(|s| s.as_str())).collect();
    let mut out = EmbeddingMatrix::new(matrix.modality(), matrix.dim())?;
    for (id, row) in matrix.rows() {
        if keep.contains(id) {
            out.push(id, row)?;
        }
    }
    Ok(out)
}

/// Synthesizes one rule-based conversation per playlist, seeded by position.
pub fn synthesize_all(playlists: &[&Playlist], catalog: &Catalog, seed: u64) -> Result<Vec<Conversation>> {
    playlists
        .iter()
        .enumerate()
        .map(|(i, p)| {
            synthesize_rule_based(p, catalog, derive_seed(seed, i as u64, 0), &RuleSynthParams::default())
                .with_context(|| format!("playlist {}", p.playlist_id))
        })
        .collect()
}

/// Model over `corpus` with the expanded-vocabulary initialization, trained
/// for `train_cfg.epochs` epochs.
pub fn train_corpus(
    corpus: &TokenCorpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainState> {
    ensure!(
        model_cfg.vocab_size == corpus.vocab.size() as usize,
        "model vocab_size {} differs from corpus vocabulary {}",
        model_cfg.vocab_size,
        corpus.vocab.size()
    );
    let examples = build_examples(&corpus.id_lists(), &corpus.vocab, train_cfg.loss_mask, model_cfg.context_len);
    let mut state = TrainState::new(init_expanded(model_cfg, &corpus.vocab)?);
    train(&mut state, &examples, train_cfg, on_epoch)?;
    Ok(state)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub catalog: SyntheticCatalogConfig,
    pub n_test: usize,
    pub k: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval_weights: WeightProfile,
    pub seed: u64,
}

impl PlantedConfig {
    /// 512 tracks in 8 genres, 400 training and 50 held-out conversations,
    /// K = 16, a 4-layer d = 128 model trained for 30 epochs.
    pub fn standard() -> Self {
        let vocab = Vocabulary::byte_level(16);
        Self {
            catalog: SyntheticCatalogConfig {
                n_tracks: 512,
                n_genres: 8,
                n_playlists: 450,
                last_day_fraction: 0.2,
                seed: 2024,
                ..SyntheticCatalogConfig::default()
            },
            n_test: 50,
            k: 16,
            model: ModelConfig {
                seed: 1,
                ..ModelConfig::new(vocab.size() as usize)
            },
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 8,
                epochs: 30,
                seed: 3,
                ..TrainConfig::default()
            },
            eval_weights: WeightProfile::quadratic_coarse_to_fine(),
            seed: 7,
        }
    }
}

pub struct PlantedRun {
    pub split: CatalogSplit,
    pub train_conversations: Vec<Conversation>,
    pub test_conversations: Vec<Conversation>,
    pub item_tokens: BTreeMap<String, MusicTokenSeq>,
    pub index: TokenIndex,
    pub corpus: TokenCorpus,
    pub report: TrainReport,
    pub runner: ModelRunner,
    pub eval: EvalReport,
    pub bm25: EvalReport,
    pub train_time: Duration,
}

/// Fixture catalog, chronological split, codebooks (the playlist codebook
/// sees only training-playlist tracks), rule-based conversations, training
/// and turn-wise evaluation against the BM25 baseline.
pub fn run_planted(cfg: &PlantedConfig, on_epoch: impl FnMut(usize, f64)) -> Result<PlantedRun> {
    let fx = generate_catalog(&cfg.catalog);
    let catalog = &fx.catalog;
    let split = chronological_split(catalog.playlists(), cfg.n_test, cfg.seed)?;
    let (test_pl, train_pl): (Vec<&Playlist>, Vec<&Playlist>) =
        catalog.playlists().iter().partition(|p| split.is_test(&p.playlist_id));

    let mut matrices = Vec::with_capacity(Modality::COUNT);
    for m in &fx.embeddings {
        matrices.push(if m.modality() == Modality::Playlist {
            restrict_rows(m, &train_pl)?
        } else {
            m.clone()
        });
    }
    let codebooks = fit_codebooks(&matrices, cfg.k, cfg.seed)?;
    let vocab = Vocabulary::byte_level(cfg.k as u32);
    let item_tokens = tokenize_items(&vocab, &codebooks, &matrices)?;
    let index = TokenIndex::build(vocab, item_tokens.clone(), &catalog.popularity_map())?;

    let train_conversations = synthesize_all(&train_pl, catalog, derive_seed(cfg.seed, 1, 0))?;
    let test_conversations = synthesize_all(&test_pl, catalog, derive_seed(cfg.seed, 2, 0))?;
    let corpus = TokenCorpus::render(vocab, &train_conversations, &item_tokens)?;

    let start = Instant::now();
    let state = train_corpus(&corpus, &cfg.model, &cfg.train, on_epoch)?;
    let train_time = start.elapsed();
    let runner = ModelRunner::new(state.model, vocab, RunnerConfig::default())?;

    let eval_cfg = EvalConfig {
        weights: cfg.eval_weights,
        seed: cfg.seed,
        ..EvalConfig::default()
    };
    let eval = evaluate_turnwise(&runner, &index, &test_conversations, &eval_cfg)?;
    let bm25_index = Bm25Index::from_catalog(catalog, Bm25Params::default())?;
    let bm25 = evaluate_bm25(&bm25_index, catalog, &test_conversations, eval_cfg.top_n, eval_cfg.exclude_previous)?;
    Ok(PlantedRun {
        split,
        train_conversations,
        test_conversations,
        item_tokens,
        index,
        corpus,
        report: state.report,
        runner,
        eval,
        bm25,
        train_time,
    })
}
