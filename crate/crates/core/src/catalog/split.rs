use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Playlist;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("no playlists to split")]
    Empty,
    #[error("test size {requested} exceeds the {available} playlists created on the latest date")]
    TestSizeTooLarge { requested: usize, available: usize },
}

/// Train/test partition of playlists, with the test tracks classified as
/// warm (seen in some train playlist) or cold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogSplit {
    pub train_playlists: BTreeSet<String>,
    pub test_playlists: BTreeSet<String>,
    pub warm_tracks: BTreeSet<String>,
    pub cold_tracks: BTreeSet<String>,
}

impl CatalogSplit {
    pub fn is_test(&self, playlist_id: &str) -> bool {
        self.test_playlists.contains(playlist_id)
    }
}

/// Samples `test_size` playlists uniformly (seeded) from those created on the
/// latest date; everything else is training data.
pub fn chronological_split(
    playlists: &[Playlist],
    test_size: usize,
    seed: u64,
) -> Result<CatalogSplit, SplitError> {
    let latest = playlists
        .iter()
        .map(|p| p.created_at)
        .max()
        .ok_or(SplitError::Empty)?;
    let last_day: Vec<&Playlist> = playlists.iter().filter(|p| p.created_at == latest).collect();
    if test_size > last_day.len() {
        return Err(SplitError::TestSizeTooLarge {
            requested: test_size,
            available: last_day.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_playlists: BTreeSet<String> = sample(&mut rng, last_day.len(), test_size)
        .into_iter()
        .map(|i| last_day[i].playlist_id.clone())
        .collect();

    let mut train_playlists = BTreeSet::new();
    let mut train_tracks = BTreeSet::new();
    let mut test_tracks = BTreeSet::new();
    for p in playlists {
        if test_playlists.contains(&p.playlist_id) {
            test_tracks.extend(p.track_ids.iter().cloned());
        } else {
            train_playlists.insert(p.playlist_id.clone());
            train_tracks.extend(p.track_ids.iter().cloned());
        }
    }
    let (warm_tracks, cold_tracks) = test_tracks
        .into_iter()
        .partition(|t| train_tracks.contains(t));
    Ok(CatalogSplit {
        train_playlists,
        test_playlists,
        warm_tracks,
        cold_tracks,
    })
}
