use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Result};
use clap::{Subcommand, ValueEnum};
use talkplay_core::catalog::{load_catalog, Catalog, CatalogSplit, Playlist};
use talkplay_core::datasynth::{synthesize_llm, write_conversations, HttpTransport, LlmClientSpec};
use talkplay_core::eval::derive_seed;

use super::read_toml;
use talkplay_cli::pipeline::synthesize_all;

#[derive(Clone, Copy, ValueEnum)]
pub enum Subset {
    All,
    Train,
    Test,
}

#[derive(Subcommand)]
pub enum SynthCmd {
    /// Deterministic template conversations.
    Rule {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conversations from an external chat-completions model. The API key
    /// is read from the environment variable named by `key_env`.
    Llm {
        #[arg(long)]
        provider_config: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn select<'c>(catalog: &'c Catalog, split: Option<PathBuf>, subset: Subset) -> Result<Vec<&'c Playlist>> {
    let all = catalog.playlists().iter();
    let Some(path) = split else {
        if !matches!(subset, Subset::All) {
            bail!("--subset needs --split");
        }
        return Ok(all.collect());
    };
    let s: CatalogSplit = serde_json::from_slice(&std::fs::read(path)?)?;
    Ok(match subset {
        Subset::All => all.collect(),
        Subset::Train => all.filter(|p| s.train_playlists.contains(&p.playlist_id)).collect(),
        Subset::Test => all.filter(|p| s.test_playlists.contains(&p.playlist_id)).collect(),
    })
}

pub fn run(cmd: SynthCmd) -> Result<()> {
    match cmd {
        SynthCmd::Rule {
            catalog,
            split,
            subset,
            seed,
            out,
        } => {
            let c = load_catalog(&catalog)?;
            let playlists = select(&c, split, subset)?;
            let convs = synthesize_all(&playlists, &c, seed)?;
            write_conversations(&out, &convs)?;
            println!("{} conversations", convs.len());
        }
        SynthCmd::Llm {
            provider_config,
            catalog,
            split,
            subset,
            seed,
            out,
        } => {
            let spec: LlmClientSpec = read_toml(&provider_config)?;
            let c = load_catalog(&catalog)?;
            let playlists = select(&c, split, subset)?;
            let transport = HttpTransport::new(&spec)?;
            let next = AtomicUsize::new(0);
            let results = Mutex::new(vec![None; playlists.len()]);
            std::thread::scope(|scope| {
                for _ in 0..spec.max_in_flight.max(1).min(playlists.len().max(1)) {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(p) = playlists.get(i) else { break };
                        let r = synthesize_llm(p, &c, &spec, &transport, derive_seed(seed, i as u64, 0));
                        if let Err(e) = &r {
                            log::warn!("playlist {}: {e}", p.playlist_id);
                        }
                        results.lock().expect("results")[i] = r.ok();
                    });
                }
            });
            let convs: Vec<_> = results.into_inner().expect("results").into_iter().flatten().collect();
            write_conversations(&out, &convs)?;
            println!("{} of {} playlists synthesized", convs.len(), playlists.len());
        }
    }
    Ok(())
}
