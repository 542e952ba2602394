use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Subcommand;
use talkplay_core::catalog::{load_embeddings, peek_modality};
use talkplay_core::datasynth::read_conversations;
use talkplay_core::quantizer::Codebook;
use talkplay_core::tokenizer::{read_item_tokens_with_vocab, tokenize_items, write_item_tokens, Vocabulary};

use talkplay_cli::corpus::TokenCorpus;

#[derive(Subcommand)]
pub enum TokenizeCmd {
    /// Quantize every item into its five music tokens. Inputs are codebook
    /// (`TPCBK1`) and embedding files in any order.
    Items {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render conversations into a token corpus for training.
    Convos {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        convos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_codebook(path: &PathBuf) -> Result<bool> {
    let bytes = std::fs::read(path)?;
    Ok(bytes.starts_with(b"TPCBK1"))
}

pub fn run(cmd: TokenizeCmd) -> Result<()> {
    match cmd {
        TokenizeCmd::Items { inputs, out } => {
            let (mut codebooks, mut matrices) = (Vec::new(), Vec::new());
            for p in &inputs {
                if is_codebook(p)? {
                    codebooks.push(Codebook::load(p)?);
                } else {
                    matrices.push(load_embeddings(p, peek_modality(p)?, None)?);
                }
            }
            let Some(k) = codebooks.first().map(|c| c.k()) else {
                bail!("no codebooks given");
            };
            if codebooks.iter().any(|c| c.k() != k) {
                bail!("codebooks disagree on k");
            }
            let vocab = Vocabulary::byte_level(k as u32);
            let items = tokenize_items(&vocab, &codebooks, &matrices)?;
            write_item_tokens(&out, &vocab, &items)?;
            println!("{} items, vocabulary of {}", items.len(), vocab.size());
        }
        TokenizeCmd::Convos { items, convos, out } => {
            let (vocab, items) = read_item_tokens_with_vocab(&items)?;
            let convs = read_conversations(&convos)?;
            let corpus = TokenCorpus::render(vocab, &convs, &items)?;
            corpus.save(&out)?;
            println!("{} sequences, {} tokens", corpus.sequences.len(), corpus.n_tokens());
        }
    }
    Ok(())
}
