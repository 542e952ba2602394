use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod cmd;

#[derive(Parser)]
#[command(name = "talkplay", version, about = "Generative conversational music recommender")]
struct Cli {
    /// Log filter, e.g. `info` or `talkplay_model=debug`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog checks and the chronological split.
    #[command(subcommand)]
    Catalog(cmd::catalog::CatalogCmd),
    /// Playlist co-occurrence embeddings.
    #[command(subcommand)]
    Item2vec(cmd::item2vec::Item2vecCmd),
    /// Per-modality K-means codebooks.
    #[command(subcommand)]
    Quantize(cmd::quantize::QuantizeCmd),
    /// Item and conversation tokenization.
    #[command(subcommand)]
    Tokenize(cmd::tokenize::TokenizeCmd),
    /// Sequence model training and sampling.
    #[command(subcommand)]
    Model(cmd::model::ModelCmd),
    /// Token index construction and lookup.
    #[command(subcommand)]
    Recsys(cmd::recsys::RecsysCmd),
    /// Conversation synthesis.
    #[command(subcommand)]
    Synth(cmd::synth::SynthCmd),
    /// Turn-wise evaluation, ablations and plots.
    #[command(subcommand)]
    Eval(cmd::eval::EvalCmd),
    /// Run the HTTP chat service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthetic planted-structure catalogs.
    #[command(subcommand)]
    Fixture(cmd::fixture::FixtureCmd),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match cli.command {
        Command::Catalog(c) => cmd::catalog::run(c),
        Command::Item2vec(c) => cmd::item2vec::run(c),
        Command::Quantize(c) => cmd::quantize::run(c),
        Command::Tokenize(c) => cmd::tokenize::run(c),
        Command::Model(c) => cmd::model::run(c),
        Command::Recsys(c) => cmd::recsys::run(c),
        Command::Synth(c) => cmd::synth::run(c),
        Command::Eval(c) => cmd::eval::run(c),
        Command::Serve { config } => cmd::serve(config),
        Command::Fixture(c) => cmd::fixture::run(c),
    }
}
