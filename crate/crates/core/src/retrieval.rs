//! Reverse lookup from generated music tokens to catalog items.
//!
//! A generated tuple rarely matches an item exactly, so items are scored by
//! weighted token overlap: `score = Σ_m λ_m · [query_m == item_m]`. Exact
//! matches reach the maximum score and therefore rank first.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tokenizer::{ItemTokenLookup, MusicTokenSeq, TokenId, Vocabulary};
use crate::Modality;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("duplicate track id {0:?}")]
    DuplicateTrack(String),
    #[error("invalid music tokens for {track:?}: {message}")]
    InvalidTokens { track: String, message: String },
    #[error("weights must be non-negative, finite, and not all zero")]
    BadWeights,
    #[error("cannot parse weight profile {0:?}")]
    ParseWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-modality λ weights in canonical modality order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile([f64; 5]);

impl WeightProfile {
    pub fn new(weights: [f64; 5]) -> Result<Self, RetrievalError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().all(|w| *w == 0.0) {
            return Err(RetrievalError::BadWeights);
        }
        Ok(Self(weights))
    }

    /// (25, 16, 9, 4, 1): coarse modalities weigh most.
    pub fn quadratic_coarse_to_fine() -> Self {
        Self([25.0, 16.0, 9.0, 4.0, 1.0])
    }

    pub fn uniform() -> Self {
        Self([1.0; 5])
    }

    pub fn weights(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn weight(&self, m: Modality) -> f64 {
        self.0[m.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self, RetrievalError> {
        Self::new(self.0.map(|w| w * c))
    }

    /// Rank class of each of the 32 match patterns (bit `m` set when
    /// modality `m` matches). Pattern sums within a relative 1e-9 of each
    /// other share a class, so rescaling the weights never reorders items
    /// through rounding.
    pub fn pattern_classes(&self) -> [u8; 32] {
        let sums: Vec<f64> = (0..32u8).map(|b| MatchPattern::from_bits(b).score(self)).collect();
        let mut order: Vec<usize> = (0..32).collect();
        order.sort_by(|&a, &b| sums[a].total_cmp(&sums[b]));
        let tol = 1e-9 * self.total();
        let mut classes = [0u8; 32];
        let mut class = 0u8;
        for w in 0..32 {
            if w > 0 && sums[order[w]] - sums[order[w - 1]] > tol {
                class += 1;
            }
            classes[order[w]] = class;
        }
        classes
    }

    /// Same profile with one modality's weight set to zero.
    pub fn without(&self, m: Modality) -> Result<Self, RetrievalError> {
        let mut w = self.0;
        w[m.index()] = 0.0;
        Self::new(w)
    }
}

impl Default for WeightProfile {
    fn default() -> Self {
        Self::quadratic_coarse_to_fine()
    }
}

impl fmt::Display for WeightProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| format!("{w}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Accepts `"25,16,9,4,1"` or a named profile (see
/// [`crate::eval::NamedProfile`]).
impl FromStr for WeightProfile {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(p) = crate::eval::NamedProfile::ALL.iter().find(|p| p.slug() == s) {
            return Ok(p.profile());
        }
        let parts: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
        let parts = parts.map_err(|_| RetrievalError::ParseWeights(s.to_string()))?;
        let arr: [f64; 5] = parts
            .try_into()
            .map_err(|_| RetrievalError::ParseWeights(s.to_string()))?;
        Self::new(arr)
    }
}

/// Which modalities of an item agree with the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchPattern(pub [bool; 5]);

impl MatchPattern {
    pub fn modalities(&self) -> Vec<Modality> {
        Modality::ALL
            .iter()
            .copied()
            .filter(|m| self.0[m.index()])
            .collect()
    }

    pub fn from_bits(bits: u8) -> Self {
        Self(std::array::from_fn(|m| bits >> m & 1 == 1))
    }

    pub fn bits(&self) -> u8 {
        self.0.iter().enumerate().fold(0, |b, (m, hit)| b | (*hit as u8) << m)
    }

    pub fn score(&self, weights: &WeightProfile) -> f64 {
        // summing in fixed modality order keeps scores bit-identical across routes
        let mut s = 0.0;
        for (hit, w) in self.0.iter().zip(weights.weights()) {
            if *hit {
                s += w;
            }
        }
        s
    }
}

/// Per-modality equality; the unknown playlist token never matches.
pub fn match_pattern(query: &MusicTokenSeq, item: &MusicTokenSeq, playlist_unk: TokenId) -> MatchPattern {
    let mut hits = [false; 5];
    for slot in 0..5 {
        let q = query.0[slot];
        hits[slot] = q == item.0[slot] && !(slot == 0 && q == playlist_unk);
    }
    MatchPattern(hits)
}

/// `Σ λ_m s_m` with binary per-modality indicators.
pub fn score_partial(
    query: &MusicTokenSeq,
    item: &MusicTokenSeq,
    weights: &WeightProfile,
    playlist_unk: TokenId,
) -> f64 {
    match_pattern(query, item, playlist_unk).score(weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrack {
    pub track_id: String,
    pub score: f64,
    pub matched: MatchPattern,
}

/// Descending-score list with a deterministic tie order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList(pub Vec<ScoredTrack>);

impl RankedList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based rank of `track_id`, if present.
    pub fn rank_of(&self, track_id: &str) -> Option<usize> {
        self.0.iter().position(|s| s.track_id == track_id).map(|p| p + 1)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.0.iter().map(|s| s.track_id.as_str()).collect()
    }
}

/// Inverted index over item token tuples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenIndex {
    vocab: Vocabulary,
    item_tokens: BTreeMap<String, MusicTokenSeq>,
    popularity: HashMap<String, f64>,
    /// token id → sorted track ids, one map per modality slot
    postings: Vec<BTreeMap<TokenId, Vec<String>>>,
    exact: HashMap<MusicTokenSeq, Vec<String>>,
}

impl TokenIndex {
    /// Builds the index. Popularity (used for tie-breaking) defaults to 0.
    pub fn build(
        vocab: Vocabulary,
        items: impl IntoIterator<Item = (String, MusicTokenSeq)>,
        popularity: &HashMap<String, f64>,
    ) -> Result<Self, RetrievalError> {
        let mut item_tokens = BTreeMap::new();
        for (id, seq) in items {
            vocab.validate(&seq).map_err(|e| RetrievalError::InvalidTokens {
                track: id.clone(),
                message: e.to_string(),
            })?;
            if item_tokens.insert(id.clone(), seq).is_some() {
                return Err(RetrievalError::DuplicateTrack(id));
            }
        }
        let mut postings: Vec<BTreeMap<TokenId, Vec<String>>> = vec![BTreeMap::new(); 5];
        let mut exact: HashMap<MusicTokenSeq, Vec<String>> = HashMap::new();
        for (id, seq) in &item_tokens {
            for (slot, &tok) in seq.0.iter().enumerate() {
                if slot == 0 && tok == vocab.playlist_unk() {
                    continue;
                }
                postings[slot].entry(tok).or_default().push(id.clone());
            }
            exact.entry(*seq).or_default().push(id.clone());
        }
        let popularity = item_tokens
            .keys()
            .map(|id| (id.clone(), popularity.get(id).copied().unwrap_or(0.0)))
            .collect();
        Ok(Self {
            vocab,
            item_tokens,
            popularity,
            postings,
            exact,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.item_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_tokens.is_empty()
    }

    pub fn items(&self) -> &BTreeMap<String, MusicTokenSeq> {
        &self.item_tokens
    }

    pub fn popularity(&self, track_id: &str) -> f64 {
        self.popularity.get(track_id).copied().unwrap_or(0.0)
    }

    /// Tracks whose `m` slot holds `token`.
    pub fn posting(&self, m: Modality, token: TokenId) -> &[String] {
        self.postings[m.index()]
            .get(&token)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// Tracks whose full tuple equals `seq`.
    pub fn exact(&self, seq: &MusicTokenSeq) -> &[String] {
        self.exact.get(seq).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Orders by score desc (via the rank classes of
    /// [`WeightProfile::pattern_classes`]), then popularity desc, then
    /// track id asc.
    pub fn compare(&self, classes: &[u8; 32], a: &ScoredTrack, b: &ScoredTrack) -> Ordering {
        classes[b.matched.bits() as usize]
            .cmp(&classes[a.matched.bits() as usize])
            .then_with(|| self.popularity(&b.track_id).total_cmp(&self.popularity(&a.track_id)))
            .then_with(|| a.track_id.cmp(&b.track_id))
    }

    /// Top `top_n` items by weighted overlap with `query`, skipping `exclude`.
    ///
    /// Candidates are the union of the postings of every positively weighted
    /// query token, so any item with a non-zero score is considered.
    pub fn recommend(
        &self,
        query: &MusicTokenSeq,
        weights: &WeightProfile,
        top_n: usize,
        exclude: &HashSet<String>,
    ) -> RankedList {
        let mut candidates: BTreeSet<&str> = BTreeSet::new();
        for m in Modality::ALL {
            if weights.weight(m) > 0.0 {
                candidates.extend(self.posting(m, query.slot(m)).iter().map(|s| s.as_str()));
            }
        }
        let unk = self.vocab.playlist_unk();
        let mut scored: Vec<ScoredTrack> = candidates
            .into_iter()
            .filter(|id| !exclude.contains(*id))
            .map(|id| {
                let matched = match_pattern(query, &self.item_tokens[id], unk);
                ScoredTrack {
                    track_id: id.to_string(),
                    score: matched.score(weights),
                    matched,
                }
            })
            .filter(|s| s.score > 0.0)
            .collect();
        let classes = weights.pattern_classes();
        scored.sort_by(|a, b| self.compare(&classes, a, b));
        scored.truncate(top_n);
        RankedList(scored)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &IndexFile::from(self))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let f: IndexFile = serde_json::from_reader(file)?;
        Self::build(f.vocab, f.items, &f.popularity)
    }
}

impl ItemTokenLookup for TokenIndex {
    fn item_tokens(&self, track_id: &str) -> Option<&MusicTokenSeq> {
        self.item_tokens.get(track_id)
    }
}

/// On-disk form of an index: just the inputs, postings are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct IndexFile {
    vocab: Vocabulary,
    items: BTreeMap<String, MusicTokenSeq>,
    popularity: HashMap<String, f64>,
}

impl From<&TokenIndex> for IndexFile {
    fn from(ix: &TokenIndex) -> Self {
        Self {
            vocab: ix.vocab,
            items: ix.item_tokens.clone(),
            popularity: ix.popularity.clone(),
        }
    }
}
