//! Playlist co-occurrence item embeddings via skip-gram with negative sampling.
//!
//! Each playlist is a bag: every ordered pair of distinct positions is a
//! (center, context) example. Negatives come from the unigram^0.75 track
//! frequency distribution.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{EmbeddingError, EmbeddingMatrix, Playlist};
use crate::Modality;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            epochs: 5,
            negatives_per_positive: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Item2VecError {
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error("no two distinct tracks co-occur in any playlist")]
    NoCooccurrence,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub struct Item2VecOutput {
    pub embeddings: EmbeddingMatrix,
    /// Mean negative-sampling loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// All ordered within-playlist pairs, once per playlist occurrence.
pub fn build_pairs(playlists: &[Playlist]) -> impl Iterator<Item = (&str, &str)> + '_ {
    playlists.iter().flat_map(|p| {
        let ids = &p.track_ids;
        (0..ids.len()).flat_map(move |i| {
            (0..ids.len())
                .filter(move |&j| j != i)
                .map(move |j| (ids[i].as_str(), ids[j].as_str()))
        })
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients of one negative-sampling term.
#[derive(Debug, Clone)]
pub struct SgnsGrad {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Loss `-ln σ(u_ctx·v_c) - Σ ln σ(-u_neg·v_c)` and its gradients.
pub fn sgns_loss_and_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> (f64, SgnsGrad) {
    let dim = center.len();
    let mut g_center = vec![0.0; dim];
    let s = dot(center, context);
    let p = sigmoid(s);
    let mut loss = -ln_sigmoid(s);
    // d/ds of -ln σ(s) = σ(s) - 1
    let coef = p - 1.0;
    let g_context: Vec<f64> = center.iter().map(|c| coef * c).collect();
    for (g, u) in g_center.iter_mut().zip(context) {
        *g += coef * u;
    }
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let s = dot(center, neg);
        loss -= ln_sigmoid(-s);
        // d/ds of -ln σ(-s) = σ(s)
        let coef = sigmoid(s);
        g_negs.push(center.iter().map(|c| coef * c).collect());
        for (g, u) in g_center.iter_mut().zip(neg.iter()) {
            *g += coef * u;
        }
    }
    (
        loss,
        SgnsGrad {
            center: g_center,
            context: g_context,
            negatives: g_negs,
        },
    )
}

fn ln_sigmoid(x: f64) -> f64 {
    // ln σ(x) = -ln(1 + e^{-x}), evaluated stably
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Trains item embeddings on the given (training) playlists.
///
/// Only tracks that appear in `playlists` receive a row.
pub fn train_item2vec(
    playlists: &[Playlist],
    config: &SkipGramConfig,
) -> Result<Item2VecOutput, Item2VecError> {
    if config.dim < 2 {
        return Err(Item2VecError::Config("dim must be at least 2"));
    }
    if config.negatives_per_positive == 0 {
        return Err(Item2VecError::Config("need at least one negative per positive"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Item2VecError::Config("learning rate must be positive"));
    }

    let mut vocab: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut counts: Vec<f64> = Vec::new();
    for p in playlists {
        for id in &p.track_ids {
            let i = *index.entry(id.as_str()).or_insert_with(|| {
                vocab.push(id.as_str());
                counts.push(0.0);
                vocab.len() - 1
            });
            counts[i] += 1.0;
        }
    }
    let pairs: Vec<(usize, usize)> = build_pairs(playlists)
        .map(|(c, o)| (index[c], index[o]))
        .filter(|(c, o)| c != o)
        .collect();
    if pairs.is_empty() {
        return Err(Item2VecError::NoCooccurrence);
    }

    let dim = config.dim;
    let n = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut output = vec![0.0f64; n * dim];

    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75)))
        .expect("counts are positive");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let lr = config.learning_rate;
    let k = config.negatives_per_positive;
    let mut neg_ids = Vec::with_capacity(k);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &pi in &order {
            let (c, o) = pairs[pi];
            neg_ids.clear();
            while neg_ids.len() < k {
                let cand = noise.sample(&mut rng);
                if cand != o {
                    neg_ids.push(cand);
                }
            }
            let center = input[c * dim..(c + 1) * dim].to_vec();
            let context = output[o * dim..(o + 1) * dim].to_vec();
            let negs: Vec<Vec<f64>> = neg_ids
                .iter()
                .map(|&j| output[j * dim..(j + 1) * dim].to_vec())
                .collect();
            let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
            let (loss, grad) = sgns_loss_and_grad(&center, &context, &neg_refs);
            total += loss;
            for (w, g) in input[c * dim..(c + 1) * dim].iter_mut().zip(&grad.center) {
                *w -= lr * g;
            }
            for (w, g) in output[o * dim..(o + 1) * dim].iter_mut().zip(&grad.context) {
                *w -= lr * g;
            }
            for (&j, g) in neg_ids.iter().zip(&grad.negatives) {
                for (w, g) in output[j * dim..(j + 1) * dim].iter_mut().zip(g) {
                    *w -= lr * g;
                }
            }
        }
        epoch_losses.push(total / pairs.len() as f64);
    }

    let mut embeddings = EmbeddingMatrix::new(Modality::Playlist, dim)?;
    let mut row = vec![0f32; dim];
    for (i, id) in vocab.iter().enumerate() {
        for (r, v) in row.iter_mut().zip(&input[i * dim..(i + 1) * dim]) {
            *r = *v as f32;
        }
        embeddings.push(*id, &row)?;
    }
    Ok(Item2VecOutput {
        embeddings,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn pl(id: &str, tracks: &[&str]) -> Playlist {
        Playlist {
            playlist_id: id.into(),
            created_at: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            track_ids: tracks.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        d / (na * nb)
    }

    fn cliques() -> Vec<Playlist> {
        let mut out = Vec::new();
        for i in 0..10 {
            out.push(pl(&format!("p{i}"), &["a", "b", "c"]));
            out.push(pl(&format!("q{i}"), &["x", "y", "z"]));
        }
        out
    }

    #[test]
    fn pairs_of_small_playlists() {
        let two = [pl("p", &["a", "b"])];
        let pairs: Vec<_> = build_pairs(&two).collect();
        assert_eq!(pairs, vec![("a", "b"), ("b", "a")]);
        let three = [pl("p", &["a", "b", "c"])];
        assert_eq!(build_pairs(&three).count(), 6);
        let single = [pl("p", &["a"])];
        assert_eq!(build_pairs(&single).count(), 0);
    }

    #[test]
    fn pair_multiset_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pool: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
        let playlists: Vec<Playlist> = (0..10)
            .map(|i| {
                let len = rng.random_range(1..6);
                let tracks: Vec<&str> = (0..len).map(|_| pool[rng.random_range(0..8)].as_str()).collect();
                pl(&format!("p{i}"), &tracks)
            })
            .collect();
        let mut got: Vec<(String, String)> = build_pairs(&playlists)
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let mut expected = Vec::new();
        for p in &playlists {
            for (i, a) in p.track_ids.iter().enumerate() {
                for (j, b) in p.track_ids.iter().enumerate() {
                    if i != j {
                        expected.push((a.clone(), b.clone()));
                    }
                }
            }
        }
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 6;
        let mut draw = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let center = draw();
        let context = draw();
        let negs = vec![draw(), draw(), draw()];
        let loss_of = |c: &[f64], o: &[f64], n: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = n.iter().map(|v| v.as_slice()).collect();
            sgns_loss_and_grad(c, o, &refs).0
        };
        let refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
        let (_, grad) = sgns_loss_and_grad(&center, &context, &refs);
        let h = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for i in 0..dim {
            let (mut p, mut m) = (center.clone(), center.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss_of(&p, &context, &negs) - loss_of(&m, &context, &negs)) / (2.0 * h);
            assert!(rel(grad.center[i], num) < 1e-4, "center[{i}]");

            let (mut p, mut m) = (context.clone(), context.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss_of(&center, &p, &negs) - loss_of(&center, &m, &negs)) / (2.0 * h);
            assert!(rel(grad.context[i], num) < 1e-4, "context[{i}]");

            for k in 0..negs.len() {
                let (mut p, mut m) = (negs.clone(), negs.clone());
                p[k][i] += h;
                m[k][i] -= h;
                let num = (loss_of(&center, &context, &p) - loss_of(&center, &context, &m)) / (2.0 * h);
                assert!(rel(grad.negatives[k][i], num) < 1e-4, "neg[{k}][{i}]");
            }
        }
    }

    #[test]
    fn cliques_separate() {
        let cfg = SkipGramConfig {
            dim: 16,
            epochs: 50,
            negatives_per_positive: 3,
            learning_rate: 0.05,
            seed: 1,
        };
        let out = train_item2vec(&cliques(), &cfg).unwrap();
        let e = &out.embeddings;
        let groups = [["a", "b", "c"], ["x", "y", "z"]];
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for g in &groups {
            for i in 0..3 {
                for j in (i + 1)..3 {
                    intra += cosine(e.get(g[i]).unwrap(), e.get(g[j]).unwrap());
                    ni += 1;
                }
            }
        }
        for a in &groups[0] {
            for b in &groups[1] {
                inter += cosine(e.get(a).unwrap(), e.get(b).unwrap());
                nx += 1;
            }
        }
        assert!(intra / ni as f64 > inter / nx as f64);
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let cfg = SkipGramConfig {
            dim: 8,
            epochs: 0,
            seed: 9,
            ..Default::default()
        };
        let out = train_item2vec(&cliques(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bound = 0.5 / 8.0;
        let expected: Vec<f32> = (0..6 * 8).map(|_| rng.random_range(-bound..bound) as f32).collect();
        assert_eq!(out.embeddings.as_flat(), expected.as_slice());
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SkipGramConfig {
            dim: 8,
            epochs: 3,
            ..Default::default()
        };
        let a = train_item2vec(&cliques(), &cfg).unwrap();
        let b = train_item2vec(&cliques(), &cfg).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn loss_non_increasing_with_small_learning_rate() {
        let cfg = SkipGramConfig {
            dim: 16,
            epochs: 10,
            negatives_per_positive: 3,
            learning_rate: 1e-4,
            seed: 2,
        };
        // many copies of the cliques keep the sampled-negative noise in the
        // epoch average well below the per-epoch improvement
        let many: Vec<Playlist> = (0..400).flat_map(|_| cliques()).collect();
        let out = train_item2vec(&many, &cfg).unwrap();
        for w in out.epoch_losses.windows(2) {
            assert!(w[1] <= w[0], "{:?}", out.epoch_losses);
        }
        let (first, last) = (out.epoch_losses[0], out.epoch_losses[9]);
        assert!(last < first - 0.5, "{:?}", out.epoch_losses);
    }

    #[test]
    fn no_cooccurrence_is_an_error() {
        let singles = [pl("p", &["a"]), pl("q", &["b"])];
        assert!(matches!(
            train_item2vec(&singles, &SkipGramConfig::default()),
            Err(Item2VecError::NoCooccurrence)
        ));
        let dup = [pl("p", &["a", "a"])];
        assert!(matches!(
            train_item2vec(&dup, &SkipGramConfig::default()),
            Err(Item2VecError::NoCooccurrence)
        ));
    }
}
