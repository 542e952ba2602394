//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "TPCKPT1\0"
//! header_len u64
//! header     JSON      config, vocabulary, tensor table, optimizer step,
//!                      train config, loss history
//! params     f32 × n   tensors concatenated in table order
//! adam m     f32 × n   (present when header.has_moments)
//! adam v     f32 × n
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use talkplay_core::tokenizer::Vocabulary;

use crate::config::{ModelConfig, TrainConfig};
use crate::params::TensorInfo;
use crate::train::{AdamState, TrainReport, TrainState};
use crate::transformer::Model;
use crate::ModelError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TPCKPT1\0";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Option<Vocabulary>,
    tensors: Vec<TensorInfo>,
    n_params: usize,
    has_moments: bool,
    adam_step: u64,
    train_config: Option<TrainConfig>,
    report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainState,
    pub vocab: Option<Vocabulary>,
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn model(&self) -> &Model<f32> {
        &self.state.model
    }
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>, ModelError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn truncated(e: std::io::Error) -> ModelError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        ModelError::Checkpoint("file is truncated".into())
    } else {
        ModelError::Io(e)
    }
}

/// Writes atomically via a sibling temp file.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    let st = &ckpt.state;
    let n = st.model.n_params();
    let has_moments = st.adam.m.len() == n && st.adam.v.len() == n;
    let header = Header {
        config: st.model.config().clone(),
        vocab: ckpt.vocab,
        tensors: st.model.layout().tensors.clone(),
        n_params: n,
        has_moments,
        adam_step: st.adam.step,
        train_config: ckpt.train_config.clone(),
        report: st.report.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        write_f32s(&mut w, &st.model.params)?;
        if has_moments {
            write_f32s(&mut w, &st.adam.m)?;
            write_f32s(&mut w, &st.adam.v)?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint. With `expected`, the stored config must match it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(truncated)?;
    let len = u64::from_le_bytes(len);
    if len > 64 << 20 {
        return Err(ModelError::Checkpoint(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(truncated)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
    if let Some(exp) = expected {
        if exp != &header.config {
            return Err(ModelError::Checkpoint(format!(
                "config mismatch: file has {:?}, expected {:?}",
                header.config, exp
            )));
        }
    }
    let mut model = Model::<f32>::zeros(header.config.clone())?;
    let names: Vec<(&str, &[usize])> = model.layout().tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
    let stored: Vec<(&str, &[usize])> = header.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
    if names != stored || header.n_params != model.n_params() {
        return Err(ModelError::Checkpoint("tensor table does not match the config".into()));
    }
    let n = header.n_params;
    model.params = read_f32s(&mut r, n)?;
    let adam = if header.has_moments {
        AdamState {
            step: header.adam_step,
            m: read_f32s(&mut r, n)?,
            v: read_f32s(&mut r, n)?,
        }
    } else {
        AdamState::new(n)
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(Checkpoint {
        state: TrainState {
            model,
            adam,
            report: header.report,
        },
        vocab: header.vocab,
        train_config: header.train_config,
    })
}
