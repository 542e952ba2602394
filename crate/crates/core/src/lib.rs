//! Core building blocks of a generative conversational music recommender.
//!
//! Items are described by five modality embeddings, each vector-quantized by a
//! per-modality K-means codebook. The resulting cluster indices become five
//! music tokens (`<|playlist-59|><|semantic-361|>...`) appended to a byte-level
//! text vocabulary, so a single autoregressive model can read and write both
//! text and items. Generated token tuples are mapped back to catalog items
//! with an exact lookup and a weighted partial-match fallback.
//!
//! The sequence model itself lives in `talkplay-model`; this crate holds
//! everything around it and defines [`eval::MusicGenerator`], the seam the
//! evaluation harness uses to drive any generator.

pub mod catalog;
pub mod datasynth;
pub mod eval;
pub mod fixture;
pub mod item2vec;
mod modality;
pub mod quantizer;
pub mod retrieval;
pub mod tokenizer;

pub use modality::{Modality, UnknownModality};
