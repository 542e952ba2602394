use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Subcommand;
use serde::Deserialize;
use talkplay_core::tokenizer::Vocabulary;
use talkplay_model::{
    build_examples, init_expanded, load_checkpoint, save_checkpoint, train, Checkpoint, ModelConfig, ModelRunner,
    RunnerConfig, SamplingConfig, TrainConfig, TrainState,
};

use super::{read_toml, write_json};
use talkplay_cli::corpus::TokenCorpus;

/// `model.toml`: a `[model]` table (vocabulary size comes from the data)
/// and a `[train]` table.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub context_len: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::new(0);
        Self {
            d_model: c.d_model,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            context_len: c.context_len,
            seed: c.seed,
        }
    }
}

impl ModelSection {
    pub fn config(&self, vocab: &Vocabulary) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab.size() as usize,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            context_len: self.context_len,
            seed: self.seed,
        }
    }
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Subcommand)]
pub enum ModelCmd {
    /// Train on a token corpus; writes `<out>/model.ckpt` after every epoch
    /// and `<out>/train_report.json` at the end.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/model.ckpt` if it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Recommend for the user text in a file and print the music block and
    /// the response.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        prompt_file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        top_p: Option<f64>,
        #[arg(long)]
        repetition_penalty: Option<f64>,
    },
}

/// Checkpoint path from a file or a training output directory.
pub fn checkpoint_path(p: PathBuf) -> PathBuf {
    if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p
    }
}

pub fn load_runner(ckpt: PathBuf, config: RunnerConfig) -> Result<ModelRunner> {
    let path = checkpoint_path(ckpt);
    let c = load_checkpoint(&path, None).with_context(|| path.display().to_string())?;
    let vocab = c.vocab.context("checkpoint carries no vocabulary")?;
    Ok(ModelRunner::new(c.state.model, vocab, config)?)
}

pub fn run(cmd: ModelCmd) -> Result<()> {
    match cmd {
        ModelCmd::Train {
            data,
            config,
            out,
            resume,
        } => {
            let file: ModelFile = match config {
                Some(p) => read_toml(&p)?,
                None => ModelFile::default(),
            };
            let corpus = TokenCorpus::load(&data)?;
            let model_cfg = file.model.config(&corpus.vocab);
            model_cfg.validate()?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(CHECKPOINT_FILE);
            let mut state = if resume && path.exists() {
                let c = load_checkpoint(&path, Some(&model_cfg))?;
                log::info!("resuming after epoch {}", c.state.epochs_done());
                c.state
            } else {
                TrainState::new(init_expanded(&model_cfg, &corpus.vocab)?)
            };
            let examples = build_examples(
                &corpus.id_lists(),
                &corpus.vocab,
                file.train.loss_mask,
                model_cfg.context_len,
            );
            log::info!(
                "{} sequences, {} tokens, {} windows, {} parameters",
                corpus.sequences.len(),
                corpus.n_tokens(),
                examples.len(),
                state.model.n_params()
            );
            // one pass per call so a checkpoint lands after each epoch
            let target = file.train.epochs;
            while state.epochs_done() < target {
                let step = TrainConfig {
                    epochs: state.epochs_done() + 1,
                    ..file.train.clone()
                };
                train(&mut state, &examples, &step, |e, loss| log::info!("epoch {e}: loss {loss:.4}"))?;
                let ckpt = Checkpoint {
                    state,
                    vocab: Some(corpus.vocab),
                    train_config: Some(file.train.clone()),
                };
                save_checkpoint(&path, &ckpt)?;
                state = ckpt.state;
            }
            write_json(&out.join("train_report.json"), &state.report)?;
            if let (Some(a), Some(b)) = (state.report.initial_loss, state.report.final_loss()) {
                println!("loss {a:.4} -> {b:.4}");
            }
        }
        ModelCmd::Generate {
            ckpt,
            prompt_file,
            seed,
            temperature,
            top_p,
            repetition_penalty,
        } => {
            let base = SamplingConfig::default();
            let sampling = SamplingConfig {
                temperature: temperature.unwrap_or(base.temperature),
                top_p: top_p.unwrap_or(base.top_p),
                repetition_penalty: repetition_penalty.unwrap_or(base.repetition_penalty),
            };
            let runner = load_runner(ckpt, RunnerConfig { sampling, ..Default::default() })?;
            let text = std::fs::read_to_string(&prompt_file)?;
            let vocab = *runner.vocab();
            let mut prompt = vec![vocab.user()];
            prompt.extend(vocab.encode_text(text.trim()));
            let (seq, response) = runner.respond(&prompt, seed)?;
            println!("{}", vocab.item_surface(&seq)?);
            println!("{response}");
        }
    }
    Ok(())
}
