//! Catalog entities and their on-disk formats.
//!
//! A catalog directory holds two line-delimited JSON files:
//!
//! * `tracks.jsonl`: one [`Track`] object per line
//! * `playlists.jsonl`: one [`Playlist`] object per line
//!
//! Per-modality embeddings live next to them as `<modality>.tpemb` (see
//! [`EmbeddingMatrix`]).

mod doc;
mod embedding;
mod split;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use doc::render_text_doc;
pub use embedding::{load_embeddings, peek_modality, save_embeddings, EmbeddingError, EmbeddingMatrix};
pub use split::{chronological_split, CatalogSplit, SplitError};

pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const PLAYLISTS_FILE: &str = "playlists.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: String,
    pub title: String,
    pub artist: String,
    #[serde(default)]
    pub album: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub popularity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyrics: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Playlist {
    pub playlist_id: String,
    pub created_at: NaiveDate,
    pub track_ids: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("duplicate track id {0:?}")]
    DuplicateTrack(String),
    #[error("duplicate playlist id {0:?}")]
    DuplicatePlaylist(String),
    #[error("playlist {playlist:?} references unknown track {track:?}")]
    DanglingTrack { playlist: String, track: String },
    #[error("invalid record {id:?}: {message}")]
    Invalid { id: String, message: String },
}

/// A validated, immutable catalog.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tracks: Vec<Track>,
    playlists: Vec<Playlist>,
    track_index: HashMap<String, usize>,
}

impl Catalog {
    /// Validates and indexes the given entities.
    pub fn new(tracks: Vec<Track>, playlists: Vec<Playlist>) -> Result<Self, CatalogError> {
        let mut track_index = HashMap::with_capacity(tracks.len());
        for (i, t) in tracks.iter().enumerate() {
            validate_track(t)?;
            if track_index.insert(t.track_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateTrack(t.track_id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for p in &playlists {
            if !seen.insert(p.playlist_id.as_str()) {
                return Err(CatalogError::DuplicatePlaylist(p.playlist_id.clone()));
            }
            if p.track_ids.is_empty() {
                return Err(CatalogError::Invalid {
                    id: p.playlist_id.clone(),
                    message: "playlist has no tracks".into(),
                });
            }
            if let Some(missing) = p.track_ids.iter().find(|id| !track_index.contains_key(*id)) {
                return Err(CatalogError::DanglingTrack {
                    playlist: p.playlist_id.clone(),
                    track: missing.clone(),
                });
            }
        }
        Ok(Self {
            tracks,
            playlists,
            track_index,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn playlists(&self) -> &[Playlist] {
        &self.playlists
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.track_index.get(id).map(|&i| &self.tracks[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.track_index.contains_key(id)
    }

    pub fn playlist(&self, id: &str) -> Option<&Playlist> {
        self.playlists.iter().find(|p| p.playlist_id == id)
    }

    /// Popularity per track, absent values read as 0.
    pub fn popularity_map(&self) -> HashMap<String, f64> {
        self.tracks
            .iter()
            .map(|t| (t.track_id.clone(), t.popularity.unwrap_or(0.0)))
            .collect()
    }

    /// Writes `tracks.jsonl` and `playlists.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), CatalogError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_jsonl(&dir.join(TRACKS_FILE), &self.tracks)?;
        write_jsonl(&dir.join(PLAYLISTS_FILE), &self.playlists)
    }
}

fn validate_track(t: &Track) -> Result<(), CatalogError> {
    let invalid = |message: &str| CatalogError::Invalid {
        id: t.track_id.clone(),
        message: message.to_string(),
    };
    if t.track_id.is_empty() {
        return Err(invalid("empty track id"));
    }
    if t.title.trim().is_empty() {
        return Err(invalid("empty title"));
    }
    if t.artist.trim().is_empty() {
        return Err(invalid("empty artist"));
    }
    if let Some(p) = t.popularity {
        if !(0.0..=100.0).contains(&p) {
            return Err(invalid("popularity outside [0, 100]"));
        }
    }
    Ok(())
}

/// Loads and validates the catalog stored in `dir`.
pub fn load_catalog(dir: &Path) -> Result<Catalog, CatalogError> {
    let tracks: Vec<Track> = read_jsonl(&dir.join(TRACKS_FILE))?;
    let playlists: Vec<Playlist> = read_jsonl(&dir.join(PLAYLISTS_FILE))?;
    Catalog::new(tracks, playlists)
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> CatalogError {
    CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads one JSON value per non-blank line; errors carry the 1-based line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CatalogError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CatalogError::Parse {
            file: name.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CatalogError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("catalog records serialize");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(id: &str) -> Track {
        Track {
            track_id: id.into(),
            title: format!("title {id}"),
            artist: "artist".into(),
            album: "album".into(),
            tags: vec![],
            year: None,
            popularity: None,
            lyrics: None,
        }
    }

    fn playlist(id: &str, tracks: &[&str]) -> Playlist {
        Playlist {
            playlist_id: id.into(),
            created_at: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            track_ids: tracks.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn smallest_catalog_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new(vec![track("a"), track("b")], vec![playlist("p", &["a", "b"])]).unwrap();
        cat.save(dir.path()).unwrap();
        let loaded = load_catalog(dir.path()).unwrap();
        assert_eq!(loaded.tracks().len(), 2);
        assert_eq!(loaded.playlists().len(), 1);
        assert_eq!(loaded.track("b").unwrap().title, "title b");
    }

    #[test]
    fn dangling_reference_is_an_integrity_error() {
        let err = Catalog::new(vec![track("a")], vec![playlist("p", &["a", "zzz"])]).unwrap_err();
        assert!(matches!(err, CatalogError::DanglingTrack { ref track, .. } if track == "zzz"));
    }

    #[test]
    fn duplicate_track_rejected() {
        let err = Catalog::new(vec![track("a"), track("a")], vec![]).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateTrack(_)));
    }

    #[test]
    fn empty_title_and_empty_playlist_rejected() {
        let mut t = track("a");
        t.title = " ".into();
        assert!(Catalog::new(vec![t], vec![]).is_err());
        assert!(Catalog::new(vec![track("a")], vec![playlist("p", &[])]).is_err());
    }

    #[test]
    fn malformed_line_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let good = serde_json::to_string(&track("a")).unwrap();
        std::fs::write(dir.path().join(TRACKS_FILE), format!("{good}\n{{\"track_id\": 3}}\n")).unwrap();
        std::fs::write(dir.path().join(PLAYLISTS_FILE), "").unwrap();
        match load_catalog(dir.path()).unwrap_err() {
            CatalogError::Parse { file, line, .. } => {
                assert_eq!(file, TRACKS_FILE);
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
