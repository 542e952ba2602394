use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use talkplay_core::catalog::load_catalog;
use talkplay_core::retrieval::{TokenIndex, WeightProfile};
use talkplay_core::tokenizer::read_item_tokens_with_vocab;

#[derive(Subcommand)]
pub enum RecsysCmd {
    /// Build the token index from item tokens; popularity comes from the
    /// catalog when given.
    Index {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the catalog against one token tuple.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Five music tokens, e.g. `<|playlist-3|><|semantic-1|>...`.
        #[arg(long)]
        tokens: String,
        #[arg(long, default_value = "quadratic-c2f")]
        weights: String,
        #[arg(long, default_value_t = 100)]
        top: usize,
        /// Track ids to leave out, comma separated.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
    },
}

pub fn run(cmd: RecsysCmd) -> Result<()> {
    match cmd {
        RecsysCmd::Index { items, catalog, out } => {
            let (vocab, items) = read_item_tokens_with_vocab(&items)?;
            let popularity = match catalog {
                Some(dir) => load_catalog(&dir)?.popularity_map(),
                None => HashMap::new(),
            };
            let index = TokenIndex::build(vocab, items, &popularity)?;
            index.save(&out)?;
            println!("{} items indexed", index.len());
        }
        RecsysCmd::Query {
            index,
            tokens,
            weights,
            top,
            exclude,
        } => {
            let index = TokenIndex::load(&index)?;
            let weights: WeightProfile = weights.parse()?;
            let query = index.vocab().parse_item(&tokens)?;
            let exclude: HashSet<String> = exclude.into_iter().collect();
            let ranked = index.recommend(&query, &weights, top, &exclude);
            for (i, s) in ranked.0.iter().enumerate() {
                let matched: Vec<String> = s.matched.modalities().iter().map(|m| m.to_string()).collect();
                println!("{}\t{}\t{}\t{}", i + 1, s.track_id, s.score, matched.join(","));
            }
        }
    }
    Ok(())
}
