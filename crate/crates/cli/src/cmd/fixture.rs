use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use talkplay_core::fixture::{generate_catalog, write_fixture, SyntheticCatalogConfig};

#[derive(Subcommand)]
pub enum FixtureCmd {
    /// Synthetic catalog with planted modality clusters, plus one
    /// embedding file per modality.
    Generate {
        #[arg(long, default_value_t = 512)]
        tracks: usize,
        #[arg(long, default_value_t = 8)]
        genres: usize,
        #[arg(long, default_value_t = 200)]
        playlists: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: FixtureCmd) -> Result<()> {
    match cmd {
        FixtureCmd::Generate {
            tracks,
            genres,
            playlists,
            dim,
            seed,
            out,
        } => {
            let cfg = SyntheticCatalogConfig {
                n_tracks: tracks,
                n_genres: genres,
                n_playlists: playlists,
                embed_dim: dim,
                seed,
                ..Default::default()
            };
            let fx = generate_catalog(&cfg);
            write_fixture(&fx, &out)?;
            println!(
                "{} tracks, {} playlists written to {}",
                fx.manifest.n_tracks,
                fx.manifest.n_playlists,
                out.display()
            );
        }
    }
    Ok(())
}
