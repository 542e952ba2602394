use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use talkplay_core::catalog::{load_embeddings, peek_modality};
use talkplay_core::quantizer::{fit_kmeans, Codebook, KMeansParams};

#[derive(Subcommand)]
pub enum QuantizeCmd {
    /// Fit a K-means codebook to one modality's embeddings.
    Fit {
        emb: PathBuf,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest-centroid index of every row, as `track_id<TAB>cluster`.
    Assign {
        cbk: PathBuf,
        emb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: QuantizeCmd) -> Result<()> {
    match cmd {
        QuantizeCmd::Fit {
            emb,
            k,
            seed,
            max_iters,
            out,
        } => {
            let m = load_embeddings(&emb, peek_modality(&emb)?, None)?;
            let fit = fit_kmeans(
                &m,
                &KMeansParams {
                    k,
                    seed,
                    max_iters,
                    ..KMeansParams::default()
                },
            )?;
            fit.codebook.save(&out)?;
            println!(
                "{}: k={} inertia {:.6} after {} iterations",
                m.modality(),
                k,
                fit.codebook.inertia(),
                fit.iterations
            );
        }
        QuantizeCmd::Assign { cbk, emb, out } => {
            let cb = Codebook::load(&cbk)?;
            let m = load_embeddings(&emb, cb.modality(), None)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            for (id, row) in m.rows() {
                writeln!(w, "{id}\t{}", cb.assign(row)?)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
