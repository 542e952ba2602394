//! Vocabulary expansion and the mapping between items, music tokens and
//! training sequences.
//!
//! Id layout for a base (byte) vocabulary of size `B` and `K` clusters per
//! modality:
//!
//! ```text
//! [0, B)                 base text tokens (bytes)
//! [B + m·K, B + (m+1)·K) music tokens of modality m, in canonical order
//! B + 5K                 <start_of_music>
//! B + 5K + 1             <end_of_music>
//! B + 5K + 2             <|playlist-unk|>
//! B + 5K + 3             <|user|>
//! B + 5K + 4             <|assistant|>
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::EmbeddingMatrix;
use crate::datasynth::{Conversation, Role};
use crate::quantizer::{Codebook, QuantizerError};
use crate::Modality;

pub type TokenId = u32;

/// Size of the byte-level base vocabulary.
pub const BYTE_VOCAB: u32 = 256;

pub const START_OF_MUSIC: &str = "<start_of_music>";
pub const END_OF_MUSIC: &str = "<end_of_music>";
pub const PLAYLIST_UNK: &str = "<|playlist-unk|>";
pub const USER_MARKER: &str = "<|user|>";
pub const ASSISTANT_MARKER: &str = "<|assistant|>";

const N_SPECIAL: u32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("token id {id} outside vocabulary of size {size}")]
    OutOfVocab { id: TokenId, size: u32 },
    #[error("{modality} cluster {cluster} out of range (k = {k})")]
    ClusterOutOfRange {
        modality: Modality,
        cluster: usize,
        k: u32,
    },
    #[error("slot {slot} holds token {id}, which is not a {expected} token")]
    WrongSlot {
        slot: usize,
        id: TokenId,
        expected: Modality,
    },
    #[error("missing {0} cluster (only the playlist slot may be unknown)")]
    MissingCluster(Modality),
    #[error("cannot parse music tokens from {0:?}")]
    Surface(String),
    #[error("no music tokens for track {0:?}")]
    UnknownTrack(String),
    #[error("turn {turn}: {message}")]
    Conversation { turn: usize, message: String },
    #[error("{0} codebook missing")]
    MissingCodebook(Modality),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a token id denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Text(u32),
    Music { modality: Modality, cluster: u32 },
    PlaylistUnk,
    StartOfMusic,
    EndOfMusic,
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    base_size: u32,
    k: u32,
}

impl Vocabulary {
    pub fn new(base_size: u32, k_per_modality: u32) -> Self {
        assert!(k_per_modality >= 1, "k must be at least 1");
        Self {
            base_size,
            k: k_per_modality,
        }
    }

    /// Byte-level base vocabulary.
    pub fn byte_level(k_per_modality: u32) -> Self {
        Self::new(BYTE_VOCAB, k_per_modality)
    }

    pub fn base_size(&self) -> u32 {
        self.base_size
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn music_start(&self) -> TokenId {
        self.base_size
    }

    pub fn music_len(&self) -> u32 {
        Modality::COUNT as u32 * self.k
    }

    pub fn som(&self) -> TokenId {
        self.base_size + self.music_len()
    }

    pub fn eom(&self) -> TokenId {
        self.som() + 1
    }

    pub fn playlist_unk(&self) -> TokenId {
        self.som() + 2
    }

    pub fn user(&self) -> TokenId {
        self.som() + 3
    }

    pub fn assistant(&self) -> TokenId {
        self.som() + 4
    }

    pub fn size(&self) -> u32 {
        self.base_size + self.music_len() + N_SPECIAL
    }

    /// Ids appended to the base model: every music token plus the two music
    /// delimiters.
    pub fn new_token_range(&self) -> std::ops::Range<TokenId> {
        self.music_start()..self.eom() + 1
    }

    /// Contiguous id range holding modality `m`'s music tokens.
    pub fn modality_range(&self, m: Modality) -> std::ops::Range<TokenId> {
        let start = self.base_size + m.index() as u32 * self.k;
        start..start + self.k
    }

    /// Number of distinct items addressable by a 5-token tuple (`K^5`).
    pub fn item_capacity(&self) -> u128 {
        (self.k as u128).pow(Modality::COUNT as u32)
    }

    pub fn music_id(&self, modality: Modality, cluster: usize) -> Result<TokenId, TokenizerError> {
        if cluster >= self.k as usize {
            return Err(TokenizerError::ClusterOutOfRange {
                modality,
                cluster,
                k: self.k,
            });
        }
        Ok(self.modality_range(modality).start + cluster as u32)
    }

    pub fn decode_token(&self, id: TokenId) -> Result<Token, TokenizerError> {
        if id >= self.size() {
            return Err(TokenizerError::OutOfVocab {
                id,
                size: self.size(),
            });
        }
        if id < self.base_size {
            return Ok(Token::Text(id));
        }
        if id < self.som() {
            let off = id - self.base_size;
            let modality = Modality::from_index((off / self.k) as usize).expect("in music range");
            return Ok(Token::Music {
                modality,
                cluster: off % self.k,
            });
        }
        Ok(match id - self.som() {
            0 => Token::StartOfMusic,
            1 => Token::EndOfMusic,
            2 => Token::PlaylistUnk,
            3 => Token::User,
            _ => Token::Assistant,
        })
    }

    /// Whether `id` may occupy slot `slot` of a music block.
    pub fn fits_slot(&self, slot: usize, id: TokenId) -> bool {
        let m = Modality::ALL[slot];
        self.modality_range(m).contains(&id) || (m == Modality::Playlist && id == self.playlist_unk())
    }

    /// Surface string of a single token; text bytes render as their
    /// (lossy) UTF-8 character.
    pub fn surface(&self, id: TokenId) -> Result<String, TokenizerError> {
        Ok(match self.decode_token(id)? {
            Token::Text(b) => {
                if self.base_size == BYTE_VOCAB {
                    String::from_utf8_lossy(&[b as u8]).into_owned()
                } else {
                    format!("<|text-{b}|>")
                }
            }
            Token::Music { modality, cluster } => format!("<|{modality}-{cluster}|>"),
            Token::PlaylistUnk => PLAYLIST_UNK.to_string(),
            Token::StartOfMusic => START_OF_MUSIC.to_string(),
            Token::EndOfMusic => END_OF_MUSIC.to_string(),
            Token::User => USER_MARKER.to_string(),
            Token::Assistant => ASSISTANT_MARKER.to_string(),
        })
    }

    /// Byte tokens of `text`.
    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        debug_assert_eq!(self.base_size, BYTE_VOCAB);
        text.bytes().map(TokenId::from).collect()
    }

    /// Decodes the text tokens of `ids` back to a string, skipping non-text ids.
    pub fn decode_text(&self, ids: &[TokenId]) -> String {
        let bytes: Vec<u8> = ids
            .iter()
            .filter(|&&id| id < self.base_size.min(BYTE_VOCAB))
            .map(|&id| id as u8)
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    /// Builds the 5-token sequence of an item. `None` is only allowed for the
    /// playlist slot and maps to `<|playlist-unk|>`.
    pub fn encode_item(&self, clusters: [Option<usize>; 5]) -> Result<MusicTokenSeq, TokenizerError> {
        let mut ids = [0; 5];
        for (slot, m) in Modality::ALL.iter().enumerate() {
            ids[slot] = match clusters[slot] {
                Some(c) => self.music_id(*m, c)?,
                None if *m == Modality::Playlist => self.playlist_unk(),
                None => return Err(TokenizerError::MissingCluster(*m)),
            };
        }
        Ok(MusicTokenSeq(ids))
    }

    /// Inverse of [`Vocabulary::encode_item`].
    pub fn decode_item(&self, seq: &MusicTokenSeq) -> Result<[Option<usize>; 5], TokenizerError> {
        self.validate(seq)?;
        let mut out = [None; 5];
        for (slot, &id) in seq.0.iter().enumerate() {
            if let Token::Music { cluster, .. } = self.decode_token(id)? {
                out[slot] = Some(cluster as usize);
            }
        }
        Ok(out)
    }

    pub fn validate(&self, seq: &MusicTokenSeq) -> Result<(), TokenizerError> {
        for (slot, &id) in seq.0.iter().enumerate() {
            if id >= self.size() {
                return Err(TokenizerError::OutOfVocab {
                    id,
                    size: self.size(),
                });
            }
            if !self.fits_slot(slot, id) {
                return Err(TokenizerError::WrongSlot {
                    slot,
                    id,
                    expected: Modality::ALL[slot],
                });
            }
        }
        Ok(())
    }

    /// `<|playlist-59|><|semantic-361|>...` rendering of an item.
    pub fn item_surface(&self, seq: &MusicTokenSeq) -> Result<String, TokenizerError> {
        self.validate(seq)?;
        seq.0.iter().map(|&id| self.surface(id)).collect()
    }

    /// Parses the surface form produced by [`Vocabulary::item_surface`].
    pub fn parse_item(&self, surface: &str) -> Result<MusicTokenSeq, TokenizerError> {
        let bad = || TokenizerError::Surface(surface.to_string());
        let mut ids = Vec::with_capacity(5);
        let mut rest = surface.trim();
        while !rest.is_empty() {
            let body = rest.strip_prefix("<|").ok_or_else(bad)?;
            let end = body.find("|>").ok_or_else(bad)?;
            let token = &body[..end];
            rest = body[end + 2..].trim_start();
            let (name, index) = token.rsplit_once('-').ok_or_else(bad)?;
            let modality: Modality = name.parse().map_err(|_| bad())?;
            if modality == Modality::Playlist && index == "unk" {
                ids.push(self.playlist_unk());
            } else {
                let cluster: usize = index.parse().map_err(|_| bad())?;
                ids.push(self.music_id(modality, cluster)?);
            }
        }
        let ids: [TokenId; 5] = ids.try_into().map_err(|_| bad())?;
        let seq = MusicTokenSeq(ids);
        self.validate(&seq)?;
        Ok(seq)
    }

    /// Renders a conversation to token ids.
    ///
    /// Each exchange becomes `<|user|> query <start_of_music> m1..m5
    /// <end_of_music> <|assistant|> response`. Exchanges stored in
    /// user/assistant/music order are normalized to user/music/assistant.
    pub fn render_conversation(
        &self,
        conversation: &Conversation,
        item_tokens: &impl ItemTokenLookup,
    ) -> Result<Vec<TokenId>, TokenizerError> {
        let normalized = conversation.normalized();
        let mut out = Vec::new();
        for (i, turn) in normalized.turns.iter().enumerate() {
            match turn.role {
                Role::User => {
                    out.push(self.user());
                    out.extend(self.encode_text(&turn.content));
                }
                Role::Assistant => {
                    out.push(self.assistant());
                    out.extend(self.encode_text(&turn.content));
                }
                Role::Music => {
                    let seq = item_tokens.item_tokens(&turn.content).ok_or_else(|| {
                        TokenizerError::Conversation {
                            turn: i,
                            message: format!("no music tokens for track {:?}", turn.content),
                        }
                    })?;
                    self.push_music_block(&mut out, seq);
                }
            }
        }
        Ok(out)
    }

    pub fn push_music_block(&self, out: &mut Vec<TokenId>, seq: &MusicTokenSeq) {
        out.push(self.som());
        out.extend_from_slice(&seq.0);
        out.push(self.eom());
    }

    /// Human-readable rendering of a token stream.
    pub fn render_surface(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        let mut bytes = Vec::new();
        for &id in ids {
            if id < self.base_size && self.base_size == BYTE_VOCAB {
                bytes.push(id as u8);
                continue;
            }
            if !bytes.is_empty() {
                out.push_str(&String::from_utf8_lossy(&bytes));
                bytes.clear();
            }
            out.push_str(&self.surface(id)?);
        }
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    /// Loss mask that keeps only music blocks and assistant responses
    /// (including their delimiters). Position `i` refers to token `ids[i]` as
    /// a prediction target.
    pub fn response_and_music_mask(&self, ids: &[TokenId]) -> Vec<bool> {
        let mut mask = Vec::with_capacity(ids.len());
        let mut in_assistant = false;
        let mut in_music = false;
        for &id in ids {
            if id == self.user() {
                in_assistant = false;
                mask.push(false);
            } else if id == self.assistant() {
                in_assistant = true;
                mask.push(true);
            } else if id == self.som() {
                in_music = true;
                in_assistant = false;
                mask.push(true);
            } else if id == self.eom() {
                in_music = false;
                mask.push(true);
            } else {
                mask.push(in_assistant || in_music);
            }
        }
        mask
    }
}

/// Five token ids, one per modality in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MusicTokenSeq(pub [TokenId; 5]);

impl MusicTokenSeq {
    pub fn ids(&self) -> &[TokenId; 5] {
        &self.0
    }

    pub fn slot(&self, m: Modality) -> TokenId {
        self.0[m.index()]
    }
}

impl fmt::Display for MusicTokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|id| id.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Anything that can resolve a track id to its music tokens.
pub trait ItemTokenLookup {
    fn item_tokens(&self, track_id: &str) -> Option<&MusicTokenSeq>;
}

impl ItemTokenLookup for BTreeMap<String, MusicTokenSeq> {
    fn item_tokens(&self, track_id: &str) -> Option<&MusicTokenSeq> {
        self.get(track_id)
    }
}

impl ItemTokenLookup for std::collections::HashMap<String, MusicTokenSeq> {
    fn item_tokens(&self, track_id: &str) -> Option<&MusicTokenSeq> {
        self.get(track_id)
    }
}

/// Quantizes every item's modality embeddings into its token sequence.
///
/// Items are the rows of the content (non-playlist) matrices, which must all
/// cover the same tracks. A track without a playlist embedding gets
/// `<|playlist-unk|>`.
pub fn tokenize_items(
    vocab: &Vocabulary,
    codebooks: &[Codebook],
    matrices: &[EmbeddingMatrix],
) -> Result<BTreeMap<String, MusicTokenSeq>, TokenizerError> {
    let find_cb = |m: Modality| codebooks.iter().find(|c| c.modality() == m);
    let find_mx = |m: Modality| matrices.iter().find(|x| x.modality() == m);
    let reference = find_mx(Modality::Semantic).ok_or(TokenizerError::MissingCluster(Modality::Semantic))?;
    let mut out = BTreeMap::new();
    for track in reference.ids() {
        let mut clusters = [None; 5];
        for m in Modality::ALL {
            let Some(row) = find_mx(m).and_then(|x| x.get(track)) else {
                if m == Modality::Playlist {
                    continue;
                }
                return Err(TokenizerError::MissingCluster(m));
            };
            let cb = find_cb(m).ok_or(TokenizerError::MissingCodebook(m))?;
            clusters[m.index()] = Some(cb.assign(row)?);
        }
        out.insert(track.clone(), vocab.encode_item(clusters)?);
    }
    Ok(out)
}

const ITEMS_HEADER: &str = "#talkplay-items";

/// Writes a `#talkplay-items base_size=B k=K` header, then
/// `track_id<TAB>surface` lines.
pub fn write_item_tokens(
    path: &Path,
    vocab: &Vocabulary,
    items: &BTreeMap<String, MusicTokenSeq>,
) -> Result<(), TokenizerError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{ITEMS_HEADER} base_size={} k={}", vocab.base_size(), vocab.k())?;
    for (id, seq) in items {
        writeln!(w, "{id}\t{}", vocab.item_surface(seq)?)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_items_header(line: &str) -> Option<Vocabulary> {
    let rest = line.strip_prefix(ITEMS_HEADER)?;
    let (mut base, mut k) = (None, None);
    for field in rest.split_whitespace() {
        match field.split_once('=')? {
            ("base_size", v) => base = v.parse().ok(),
            ("k", v) => k = v.parse().ok(),
            _ => {}
        }
    }
    Some(Vocabulary::new(base?, k?))
}

/// Reads a file written by [`write_item_tokens`] together with the
/// vocabulary named in its header.
pub fn read_item_tokens_with_vocab(
    path: &Path,
) -> Result<(Vocabulary, BTreeMap<String, MusicTokenSeq>), TokenizerError> {
    let first = BufReader::new(std::fs::File::open(path)?)
        .lines()
        .next()
        .transpose()?
        .unwrap_or_default();
    let vocab = parse_items_header(&first)
        .ok_or_else(|| TokenizerError::Surface(format!("missing {ITEMS_HEADER} header: {first:?}")))?;
    Ok((vocab, read_item_tokens(path, &vocab)?))
}

/// Reads `track_id<TAB>surface` lines. A header, if present, must agree
/// with `vocab`.
pub fn read_item_tokens(
    path: &Path,
    vocab: &Vocabulary,
) -> Result<BTreeMap<String, MusicTokenSeq>, TokenizerError> {
    let mut out = BTreeMap::new();
    for line in BufReader::new(std::fs::File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(found) = parse_items_header(&line) {
                if found != *vocab {
                    return Err(TokenizerError::Surface(format!(
                        "item tokens were written for k={} (base {}), expected k={} (base {})",
                        found.k(),
                        found.base_size(),
                        vocab.k(),
                        vocab.base_size()
                    )));
                }
            }
            continue;
        }
        let (id, surface) = line
            .split_once('\t')
            .ok_or_else(|| TokenizerError::Surface(line.clone()))?;
        out.insert(id.to_string(), vocab.parse_item(surface)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasynth::Turn;
    use proptest::prelude::*;

    #[test]
    fn small_vocab_layout() {
        let v = Vocabulary::new(100, 4);
        assert_eq!(v.modality_range(Modality::Playlist), 100..104);
        assert_eq!(v.modality_range(Modality::Audio), 116..120);
        assert_eq!(v.som(), 120);
        assert_eq!(v.eom(), 121);
        assert_eq!(v.playlist_unk(), 122);
        assert_eq!(v.size(), 125);
    }

    #[test]
    fn full_scale_expansion() {
        let v = Vocabulary::byte_level(1024);
        assert_eq!(v.music_len(), 5120);
        assert_eq!(v.new_token_range().len(), 5122);
        assert_eq!(v.item_capacity(), 1_125_899_906_842_624);
    }

    #[test]
    fn worked_example_surface() {
        let v = Vocabulary::byte_level(1024);
        let seq = v
            .encode_item([Some(59), Some(361), Some(7), Some(98), Some(29)])
            .unwrap();
        assert_eq!(
            v.item_surface(&seq).unwrap(),
            "<|playlist-59|><|semantic-361|><|metadata-7|><|lyrics-98|><|audio-29|>"
        );
        assert_eq!(v.parse_item(&v.item_surface(&seq).unwrap()).unwrap(), seq);
        let zero = v.encode_item([Some(0); 5]).unwrap();
        assert_eq!(
            v.item_surface(&zero).unwrap(),
            "<|playlist-0|><|semantic-0|><|metadata-0|><|lyrics-0|><|audio-0|>"
        );
    }

    #[test]
    fn out_of_range_cluster_and_id() {
        let v = Vocabulary::byte_level(16);
        assert!(matches!(
            v.encode_item([Some(0), Some(16), Some(0), Some(0), Some(0)]),
            Err(TokenizerError::ClusterOutOfRange { .. })
        ));
        assert!(matches!(
            v.encode_item([Some(0), None, Some(0), Some(0), Some(0)]),
            Err(TokenizerError::MissingCluster(Modality::Semantic))
        ));
        assert!(v.decode_token(v.size()).is_err());
        assert!(v.parse_item("<|playlist-1|>").is_err());
        assert!(v.parse_item("<|semantic-1|><|playlist-1|><|metadata-1|><|lyrics-1|><|audio-1|>").is_err());
    }

    #[test]
    fn cold_item_uses_unk() {
        let v = Vocabulary::byte_level(8);
        let seq = v.encode_item([None, Some(1), Some(2), Some(3), Some(4)]).unwrap();
        assert_eq!(seq.slot(Modality::Playlist), v.playlist_unk());
        let s = v.item_surface(&seq).unwrap();
        assert!(s.starts_with("<|playlist-unk|>"));
        assert_eq!(v.parse_item(&s).unwrap(), seq);
        assert_eq!(v.decode_item(&seq).unwrap(), [None, Some(1), Some(2), Some(3), Some(4)]);
    }

    #[test]
    fn full_bijection_for_several_k() {
        for k in [4u32, 16, 1024] {
            let v = Vocabulary::byte_level(k);
            for id in v.music_start()..v.som() {
                let Token::Music { modality, cluster } = v.decode_token(id).unwrap() else {
                    panic!("music id {id} decoded to something else");
                };
                assert_eq!(v.music_id(modality, cluster as usize).unwrap(), id);
            }
        }
    }

    fn convo(turns: &[(Role, &str)]) -> Conversation {
        Conversation {
            conversation_id: "c".into(),
            source_playlist_id: "p".into(),
            turns: turns
                .iter()
                .map(|(r, c)| Turn {
                    role: *r,
                    content: c.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn render_one_exchange_golden() {
        let v = Vocabulary::new(BYTE_VOCAB, 2);
        let mut items = BTreeMap::new();
        items.insert("t1".to_string(), v.encode_item([Some(1), Some(0), Some(1), Some(0), Some(1)]).unwrap());
        let c = convo(&[(Role::User, "hi"), (Role::Music, "t1"), (Role::Assistant, "ok")]);
        let ids = v.render_conversation(&c, &items).unwrap();
        // 256.. music: playlist 256-257, semantic 258-259, metadata 260-261,
        // lyrics 262-263, audio 264-265; som 266, eom 267, unk 268, user 269,
        // assistant 270
        assert_eq!(
            ids,
            vec![269, 104, 105, 266, 257, 258, 261, 262, 265, 267, 270, 111, 107]
        );
        assert_eq!(
            v.render_surface(&ids).unwrap(),
            "<|user|>hi<start_of_music><|playlist-1|><|semantic-0|><|metadata-1|><|lyrics-0|><|audio-1|><end_of_music><|assistant|>ok"
        );
        // assistant-before-music order normalizes to the same stream
        let swapped = convo(&[(Role::User, "hi"), (Role::Assistant, "ok"), (Role::Music, "t1")]);
        assert_eq!(v.render_conversation(&swapped, &items).unwrap(), ids);
        assert!(v.render_conversation(&convo(&[]), &items).unwrap().is_empty());
        let unknown = convo(&[(Role::User, "hi"), (Role::Music, "nope"), (Role::Assistant, "ok")]);
        assert!(v.render_conversation(&unknown, &items).is_err());
    }

    #[test]
    fn mask_selects_responses_and_music() {
        let v = Vocabulary::new(BYTE_VOCAB, 2);
        let mut items = BTreeMap::new();
        items.insert("t".to_string(), v.encode_item([Some(0); 5]).unwrap());
        let c = convo(&[(Role::User, "ab"), (Role::Music, "t"), (Role::Assistant, "c")]);
        let ids = v.render_conversation(&c, &items).unwrap();
        let mask = v.response_and_music_mask(&ids);
        assert_eq!(
            mask,
            vec![false, false, false, true, true, true, true, true, true, true, true, true]
        );
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            k in 1u32..2000,
            raw in proptest::array::uniform5(0usize..1_000_000),
            cold in any::<bool>(),
        ) {
            let v = Vocabulary::byte_level(k);
            let mut clusters = raw.map(|c| Some(c % k as usize));
            if cold {
                clusters[0] = None;
            }
            let seq = v.encode_item(clusters).unwrap();
            prop_assert_eq!(v.decode_item(&seq).unwrap(), clusters);
            for (slot, id) in seq.0.iter().enumerate() {
                prop_assert!(v.fits_slot(slot, *id));
            }
            prop_assert_eq!(v.parse_item(&v.item_surface(&seq).unwrap()).unwrap(), seq);
        }
    }
}

#[cfg(test)]
mod item_file_tests {
    use super::*;

    #[test]
    fn item_tokens_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.tok");
        let vocab = Vocabulary::byte_level(16);
        let mut items = BTreeMap::new();
        items.insert("t1".to_string(), vocab.encode_item([None, Some(1), Some(2), Some(3), Some(15)]).unwrap());
        items.insert("t2".to_string(), vocab.encode_item([Some(0); 5]).unwrap());
        write_item_tokens(&path, &vocab, &items).unwrap();
        assert_eq!(read_item_tokens_with_vocab(&path).unwrap(), (vocab, items.clone()));
        assert_eq!(read_item_tokens(&path, &vocab).unwrap(), items);
        assert!(read_item_tokens(&path, &Vocabulary::byte_level(32)).is_err());

        let bare = dir.path().join("bare.tok");
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&bare, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
        assert_eq!(read_item_tokens(&bare, &vocab).unwrap(), items);
        assert!(read_item_tokens_with_vocab(&bare).is_err());
    }
}
