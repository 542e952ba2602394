use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, Playlist};

/// Individual artist names of a credit such as `"2 Chainz, Drake"`.
pub(crate) fn split_artists(credit: &str) -> impl Iterator<Item = String> + '_ {
    credit
        .split([',', '&'])
        .map(|a| a.trim().to_lowercase())
        .filter(|a| !a.is_empty())
}

/// Hard-negative pool: tracks sharing an artist with the playlist but not in
/// it, sorted by track id.
pub fn negative_pool(playlist: &Playlist, catalog: &Catalog) -> Vec<String> {
    let members: HashSet<&str> = playlist.track_ids.iter().map(|s| s.as_str()).collect();
    let artists: HashSet<String> = playlist
        .track_ids
        .iter()
        .filter_map(|id| catalog.track(id))
        .flat_map(|t| split_artists(&t.artist).collect::<Vec<_>>())
        .collect();
    let mut pool: Vec<String> = catalog
        .tracks()
        .iter()
        .filter(|t| !members.contains(t.track_id.as_str()))
        .filter(|t| split_artists(&t.artist).any(|a| artists.contains(&a)))
        .map(|t| t.track_id.clone())
        .collect();
    pool.sort();
    pool
}

/// Up to `n` seeded draws without replacement from [`negative_pool`].
pub fn sample_negatives(playlist: &Playlist, catalog: &Catalog, n: usize, seed: u64) -> Vec<String> {
    let mut pool = negative_pool(playlist, catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(n);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Track;
    use chrono::NaiveDate;

    fn t(id: &str, artist: &str) -> Track {
        Track {
            track_id: id.into(),
            title: id.into(),
            artist: artist.into(),
            album: String::new(),
            tags: vec![],
            year: None,
            popularity: None,
            lyrics: None,
        }
    }

    fn pl(tracks: &[&str]) -> Playlist {
        Playlist {
            playlist_id: "p".into(),
            created_at: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            track_ids: tracks.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn single_out_of_playlist_track() {
        let cat = Catalog::new(
            vec![t("a", "X"), t("b", "X"), t("c", "Y")],
            vec![pl(&["a"])],
        )
        .unwrap();
        assert_eq!(sample_negatives(&cat.playlists()[0], &cat, 5, 0), vec!["b".to_string()]);
    }

    #[test]
    fn exhausted_artists_give_empty_pool() {
        let cat = Catalog::new(vec![t("a", "X"), t("b", "X"), t("c", "Y")], vec![pl(&["a", "b"])]).unwrap();
        assert!(sample_negatives(&cat.playlists()[0], &cat, 5, 0).is_empty());
    }

    #[test]
    fn collaborations_share_artists() {
        let cat = Catalog::new(
            vec![t("a", "2 Chainz, Drake"), t("b", "Young Thug & Drake"), t("c", "Other")],
            vec![pl(&["a"])],
        )
        .unwrap();
        assert_eq!(negative_pool(&cat.playlists()[0], &cat), vec!["b".to_string()]);
    }

    #[test]
    fn seeded_draws_stay_inside_pool() {
        let mut tracks = Vec::new();
        for i in 0..60 {
            tracks.push(t(&format!("t{i:02}"), &format!("artist{}", i % 6)));
        }
        let members = ["t00", "t01", "t07", "t13"];
        let cat = Catalog::new(tracks, vec![pl(&members)]).unwrap();
        let p = &cat.playlists()[0];
        // brute force: artists 0, 1 are present (t07 → artist1, t13 → artist1)
        let expected: HashSet<String> = (0..60)
            .filter(|i| i % 6 == 0 || i % 6 == 1)
            .map(|i| format!("t{i:02}"))
            .filter(|id| !members.contains(&id.as_str()))
            .collect();
        for seed in 0..10 {
            let got = sample_negatives(p, &cat, 7, seed);
            assert_eq!(got.len(), 7);
            assert!(got.iter().all(|g| expected.contains(g)));
            assert_eq!(got, sample_negatives(p, &cat, 7, seed));
        }
        assert_eq!(sample_negatives(p, &cat, 100, 1).len(), expected.len());
    }
}
