//! Binary per-modality embedding files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "TPEMB1" | modality: u8 | dim: u32 | rows: u32
//! rows × ( id_len: u16 | id: UTF-8 bytes | dim × f32 )
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::Catalog;
use crate::Modality;

const MAGIC: &[u8; 6] = b"TPEMB1";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic, not an embedding file")]
    BadMagic,
    #[error("unknown modality byte {0}")]
    BadModality(u8),
    #[error("file holds {found} embeddings, expected {expected}")]
    ModalityMismatch { expected: Modality, found: Modality },
    #[error("dimension mismatch for {track:?}: expected {expected}, got {got}")]
    DimMismatch {
        track: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in row {0:?}")]
    NonFinite(String),
    #[error("row id {0:?} is not in the catalog")]
    UnknownTrack(String),
    #[error("duplicate row id {0:?}")]
    DuplicateRow(String),
    #[error("row id is not valid UTF-8")]
    BadId,
    #[error("track id longer than 65535 bytes")]
    IdTooLong,
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("trailing bytes after the last row")]
    TrailingBytes,
}

/// Dense rows keyed by track id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    modality: Modality,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(modality: Modality, dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(Self {
            modality,
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn push(&mut self, track_id: impl Into<String>, row: &[f32]) -> Result<(), EmbeddingError> {
        let track_id = track_id.into();
        if row.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                track: track_id,
                expected: self.dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(track_id));
        }
        if self.index.contains_key(&track_id) {
            return Err(EmbeddingError::DuplicateRow(track_id));
        }
        self.index.insert(track_id.clone(), self.ids.len());
        self.ids.push(track_id);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, track_id: &str) -> Option<&[f32]> {
        self.index.get(track_id).map(|&i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, row)| (id.as_str(), row))
    }

    /// Row-major `len × dim` buffer.
    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> EmbeddingError + '_ {
    move |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), EmbeddingError> {
    let file = File::create(path).map_err(io(path))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(16 + matrix.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(matrix.modality.code());
    buf.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(matrix.len() as u32).to_le_bytes());
    for (id, row) in matrix.rows() {
        let len = u16::try_from(id.len()).map_err(|_| EmbeddingError::IdTooLong)?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io(path))?;
    w.flush().map_err(io(path))
}

/// Loads an embedding file, checking its modality tag and, when a catalog is
/// given, that every row id resolves in it.
pub fn load_embeddings(
    path: &Path,
    modality: Modality,
    catalog: Option<&Catalog>,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let file = File::open(path).map_err(io(path))?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io(path))?;
    let matrix = decode(&bytes).map_err(|e| match e {
        EmbeddingError::Io { source, .. } => io(path)(source),
        other => other,
    })?;
    if matrix.modality != modality {
        return Err(EmbeddingError::ModalityMismatch {
            expected: modality,
            found: matrix.modality,
        });
    }
    if let Some(cat) = catalog {
        if let Some(id) = matrix.ids.iter().find(|id| !cat.contains(id)) {
            return Err(EmbeddingError::UnknownTrack(id.clone()));
        }
    }
    Ok(matrix)
}

/// Reads the modality tag stored in an embedding file header.
pub fn peek_modality(path: &Path) -> Result<Modality, EmbeddingError> {
    let mut head = [0u8; 7];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map_err(io(path))?;
    if &head[..6] != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    Modality::from_code(head[6]).ok_or(EmbeddingError::BadModality(head[6]))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(EmbeddingError::Io {
                path: PathBuf::new(),
                source: std::io::ErrorKind::UnexpectedEof.into(),
            }),
        }
    }

    fn u16(&mut self) -> Result<u16, EmbeddingError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(6).map_err(|_| EmbeddingError::BadMagic)? != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    let code = c.take(1)?[0];
    let modality = Modality::from_code(code).ok_or(EmbeddingError::BadModality(code))?;
    let dim = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let mut m = EmbeddingMatrix::new(modality, dim)?;
    let mut row = vec![0f32; dim];
    for _ in 0..rows {
        let len = c.u16()? as usize;
        let id = std::str::from_utf8(c.take(len)?).map_err(|_| EmbeddingError::BadId)?;
        for (v, chunk) in row.iter_mut().zip(c.take(dim * 4)?.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        m.push(id, &row)?;
    }
    if c.pos != bytes.len() {
        return Err(EmbeddingError::TrailingBytes);
    }
    Ok(m)
}
