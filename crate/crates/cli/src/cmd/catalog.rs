use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use talkplay_core::catalog::{chronological_split, load_catalog};

use super::write_json;

#[derive(Subcommand)]
pub enum CatalogCmd {
    /// Parse and cross-check tracks.jsonl and playlists.jsonl.
    Validate { dir: PathBuf },
    /// Hold out playlists from the latest creation date.
    Split {
        dir: PathBuf,
        #[arg(long)]
        test_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: CatalogCmd) -> Result<()> {
    match cmd {
        CatalogCmd::Validate { dir } => {
            let c = load_catalog(&dir)?;
            println!("ok: {} tracks, {} playlists", c.tracks().len(), c.playlists().len());
        }
        CatalogCmd::Split {
            dir,
            test_size,
            seed,
            out,
        } => {
            let c = load_catalog(&dir)?;
            let split = chronological_split(c.playlists(), test_size, seed)?;
            write_json(&out, &split)?;
            println!(
                "{} train / {} test playlists, {} cold tracks",
                split.train_playlists.len(),
                split.test_playlists.len(),
                split.cold_tracks.len()
            );
        }
    }
    Ok(())
}
