use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use talkplay_core::catalog::{load_catalog, save_embeddings, CatalogSplit, Playlist};
use talkplay_core::item2vec::{train_item2vec, SkipGramConfig};

#[derive(Subcommand)]
pub enum Item2vecCmd {
    /// Skip-gram with negative sampling over playlists.
    Train {
        catalog: PathBuf,
        /// Train only on the training playlists of this split.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 0.025)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: Item2vecCmd) -> Result<()> {
    let Item2vecCmd::Train {
        catalog,
        split,
        dim,
        epochs,
        negatives,
        lr,
        seed,
        out,
    } = cmd;
    let c = load_catalog(&catalog)?;
    let playlists: Vec<Playlist> = match split {
        Some(path) => {
            let s: CatalogSplit = serde_json::from_slice(&std::fs::read(path)?)?;
            c.playlists()
                .iter()
                .filter(|p| s.train_playlists.contains(&p.playlist_id))
                .cloned()
                .collect()
        }
        None => c.playlists().to_vec(),
    };
    let cfg = SkipGramConfig {
        dim,
        epochs,
        negatives_per_positive: negatives,
        learning_rate: lr,
        seed,
    };
    let result = train_item2vec(&playlists, &cfg)?;
    for (e, l) in result.epoch_losses.iter().enumerate() {
        log::info!("epoch {e}: loss {l:.4}");
    }
    save_embeddings(&result.embeddings, &out)?;
    println!("{} tracks embedded in {} dimensions", result.embeddings.len(), dim);
    Ok(())
}
