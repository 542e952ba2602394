//! Okapi BM25 over the text documents of catalog tracks.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{render_text_doc, Catalog};
use crate::retrieval::{MatchPattern, RankedList, ScoredTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    ids: Vec<String>,
    tf: Vec<HashMap<String, u32>>,
    len: Vec<f64>,
    avg_len: f64,
    df: HashMap<String, usize>,
    popularity: HashMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Bm25Error {
    #[error("BM25 corpus is empty")]
    EmptyCorpus,
}

impl Bm25Index {
    pub fn build(docs: &[(String, String)], params: Bm25Params) -> Result<Self, Bm25Error> {
        if docs.is_empty() {
            return Err(Bm25Error::EmptyCorpus);
        }
        let mut ids = Vec::with_capacity(docs.len());
        let mut tf = Vec::with_capacity(docs.len());
        let mut len = Vec::with_capacity(docs.len());
        let mut df: HashMap<String, usize> = HashMap::new();
        for (id, text) in docs {
            let toks = tokenize(text);
            let mut counts: HashMap<String, u32> = HashMap::new();
            for t in &toks {
                *counts.entry(t.clone()).or_default() += 1;
            }
            for t in counts.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            ids.push(id.clone());
            len.push(toks.len() as f64);
            tf.push(counts);
        }
        let avg_len = len.iter().sum::<f64>() / len.len() as f64;
        Ok(Self {
            params,
            ids,
            tf,
            len,
            avg_len,
            df,
            popularity: HashMap::new(),
        })
    }

    /// One document per track from [`render_text_doc`]; popularity breaks ties.
    pub fn from_catalog(catalog: &Catalog, params: Bm25Params) -> Result<Self, Bm25Error> {
        let docs: Vec<(String, String)> = catalog
            .tracks()
            .iter()
            .map(|t| (t.track_id.clone(), render_text_doc(t)))
            .collect();
        let mut ix = Self::build(&docs, params)?;
        ix.popularity = catalog.popularity_map();
        Ok(ix)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of every document, in build order. Repeated query terms count once.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let Bm25Params { k1, b } = self.params;
        let mut out = vec![0.0; self.ids.len()];
        for term in &terms {
            if !self.df.contains_key(term) {
                continue;
            }
            let idf = self.idf(term);
            for (d, score) in out.iter_mut().enumerate() {
                let f = self.tf[d].get(term).copied().unwrap_or(0) as f64;
                if f > 0.0 {
                    let norm = k1 * (1.0 - b + b * self.len[d] / self.avg_len);
                    *score += idf * f * (k1 + 1.0) / (f + norm);
                }
            }
        }
        out
    }

    /// Documents with a positive score, best first; ties by popularity desc
    /// then id asc.
    pub fn rank(&self, query: &str, top_n: usize, exclude: &HashSet<String>) -> RankedList {
        let scores = self.scores(query);
        let pop = |id: &str| self.popularity.get(id).copied().unwrap_or(0.0);
        let mut hits: Vec<ScoredTrack> = scores
            .into_iter()
            .enumerate()
            .filter(|(d, s)| *s > 0.0 && !exclude.contains(&self.ids[*d]))
            .map(|(d, s)| ScoredTrack {
                track_id: self.ids[d].clone(),
                score: s,
                matched: MatchPattern::default(),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| pop(&b.track_id).total_cmp(&pop(&a.track_id)))
                .then_with(|| a.track_id.cmp(&b.track_id))
        });
        hits.truncate(top_n);
        RankedList(hits)
    }
}

/// Ranks a one-off corpus of `(id, text)` documents against `query`.
pub fn bm25_rank(docs: &[(String, String)], query: &str, params: Bm25Params) -> Result<RankedList, Bm25Error> {
    let ix = Bm25Index::build(docs, params)?;
    Ok(ix.rank(query, usize::MAX, &HashSet::new()))
}
