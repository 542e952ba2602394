//! Tokenized conversation corpus (`*.tok`).
//!
//! JSON lines. The first line is a header
//! `{"format":"talkplay-tokens-v1","vocab":{"base_size":256,"k":16}}`; every
//! further line is `{"id": "...", "ids": [u32, ...]}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use talkplay_core::datasynth::Conversation;
use talkplay_core::tokenizer::{ItemTokenLookup, TokenId, Vocabulary};

pub const CORPUS_FORMAT: &str = "talkplay-tokens-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    vocab: Vocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub id: String,
    pub ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenCorpus {
    pub vocab: Vocabulary,
    pub sequences: Vec<TokenSequence>,
}

impl TokenCorpus {
    /// Renders each conversation; conversations whose tracks lack tokens
    /// fail the whole call.
    pub fn render(
        vocab: Vocabulary,
        conversations: &[Conversation],
        items: &impl ItemTokenLookup,
    ) -> Result<Self> {
        let sequences = conversations
            .iter()
            .map(|c| {
                let ids = vocab
                    .render_conversation(c, items)
                    .with_context(|| format!("conversation {}", c.conversation_id))?;
                Ok(TokenSequence {
                    id: c.conversation_id.clone(),
                    ids,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { vocab, sequences })
    }

    pub fn id_lists(&self) -> Vec<Vec<TokenId>> {
        self.sequences.iter().map(|s| s.ids.clone()).collect()
    }

    pub fn n_tokens(&self) -> usize {
        self.sequences.iter().map(|s| s.ids.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path).with_context(|| path.display().to_string())?);
        let header = Header {
            format: CORPUS_FORMAT.into(),
            vocab: self.vocab,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for s in &self.sequences {
            serde_json::to_writer(&mut w, s)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).with_context(|| path.display().to_string())?;
        let mut lines = BufReader::new(file).lines();
        let first = lines.next().context("empty token corpus")??;
        let header: Header = serde_json::from_str(&first).context("token corpus header")?;
        if header.format != CORPUS_FORMAT {
            bail!("unsupported token corpus format {:?}", header.format);
        }
        let size = header.vocab.size();
        let mut sequences = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: TokenSequence =
                serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 2))?;
            if let Some(bad) = s.ids.iter().find(|&&id| id >= size) {
                bail!("sequence {} holds token {bad} outside a vocabulary of {size}", s.id);
            }
            sequences.push(s);
        }
        Ok(Self {
            vocab: header.vocab,
            sequences,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> TokenCorpus {
        let vocab = Vocabulary::byte_level(4);
        TokenCorpus {
            vocab,
            sequences: vec![
                TokenSequence {
                    id: "a".into(),
                    ids: vec![vocab.user(), 104, 105, vocab.som()],
                },
                TokenSequence {
                    id: "b".into(),
                    ids: vec![vocab.assistant()],
                },
            ],
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tok");
        let c = corpus();
        c.save(&path).unwrap();
        assert_eq!(TokenCorpus::load(&path).unwrap(), c);
        assert_eq!(c.n_tokens(), 5);
    }

    #[test]
    fn out_of_range_token_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tok");
        let mut c = corpus();
        c.sequences[1].ids.push(c.vocab.size());
        c.save(&path).unwrap();
        assert!(TokenCorpus::load(&path).is_err());
    }

    #[test]
    fn foreign_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tok");
        std::fs::write(&path, "{\"format\":\"other\",\"vocab\":{\"base_size\":256,\"k\":4}}\n").unwrap();
        assert!(TokenCorpus::load(&path).is_err());
    }
}
