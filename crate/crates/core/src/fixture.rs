//! Seeded synthetic catalogs with planted latent structure.
//!
//! Every track has a genre and, for each modality, one binary sub-attribute.
//! A modality's embedding is a noisy copy of the center for
//! (genre, sub-attribute), so K-means with `k = 2 · n_genres` can recover the
//! planted clusters. The text fields echo the same attributes:
//!
//! - playlist: the "scene" a track belongs to; playlists are genre-pure and
//!   mostly drawn from one scene, and artists are tied to scenes
//! - semantic: a mood tag
//! - metadata: release decade
//! - lyrics: a theme word repeated in the lyrics
//! - audio: a tempo/texture tag

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{save_embeddings, Catalog, CatalogError, EmbeddingMatrix, Playlist, Track};
use crate::datasynth::AUDIO_WORDS;
use crate::Modality;

const GENRES: &[&str] = &["rock", "jazz", "hiphop", "folk", "techno", "soul", "metal", "reggae"];

const MOODS: &[[&str; 2]] = &[
    ["gritty", "anthemic"],
    ["smoky", "swinging"],
    ["boastful", "introspective"],
    ["pastoral", "wistful"],
    ["hypnotic", "brooding"],
    ["warm", "yearning"],
    ["furious", "epic"],
    ["sunny", "rootsy"],
];

const THEMES: &[[&str; 2]] = &[
    ["highway", "rebellion"],
    ["midnight", "romance"],
    ["hustle", "money"],
    ["river", "harvest"],
    ["machine", "future"],
    ["heartbreak", "devotion"],
    ["battle", "darkness"],
    ["island", "freedom"],
];

const FILLER: &[&str] = &[
    "we", "go", "on", "and", "the", "night", "is", "long", "you", "know", "i", "feel", "it", "all", "again",
    "now",
];

const TITLE_A: &[&str] = &[
    "Golden", "Silent", "Broken", "Electric", "Velvet", "Paper", "Hollow", "Crimson", "Lonely", "Wild",
    "Frozen", "Neon",
];

const TITLE_B: &[&str] = &[
    "Heart", "Road", "Sky", "Dream", "Fire", "Garden", "Signal", "Shadow", "Mirror", "Train", "Letter",
    "Tide",
];

const ARTIST_WORDS: &[&str] = &[
    "Owls", "Pilots", "Lanterns", "Rivals", "Echoes", "Wolves", "Comets", "Saints", "Tigers", "Ghosts",
    "Drifters", "Sparrows", "Kings", "Strangers", "Mavericks", "Dials",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCatalogConfig {
    pub n_tracks: usize,
    pub n_genres: usize,
    pub n_playlists: usize,
    pub min_playlist_len: usize,
    pub max_playlist_len: usize,
    /// Probability that a playlist slot is filled from the dominant scene.
    pub scene_purity: f64,
    /// Artists per (genre, scene).
    pub artists_per_scene: usize,
    pub embed_dim: usize,
    /// Per-coordinate std of the noise around a cluster center.
    pub noise: f64,
    /// Playlist creation dates span this many days.
    pub n_days: i64,
    /// Share of playlists created on the last day (at least one).
    pub last_day_fraction: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticCatalogConfig {
    fn default() -> Self {
        Self {
            n_tracks: 512,
            n_genres: 8,
            n_playlists: 200,
            min_playlist_len: 6,
            max_playlist_len: 12,
            scene_purity: 0.85,
            artists_per_scene: 2,
            embed_dim: 16,
            noise: 0.05,
            n_days: 30,
            last_day_fraction: 0.3,
            start_date: NaiveDate::from_ymd_opt(2017, 9, 1).expect("valid date"),
            seed: 0,
        }
    }
}

/// Latent attributes of one track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedLabels {
    pub genre: usize,
    /// Binary sub-attribute per modality, canonical order.
    pub bits: [u8; 5],
}

impl PlantedLabels {
    /// Planted cluster id for modality `m`, in `0..2 * n_genres`.
    pub fn cluster(&self, m: Modality) -> usize {
        2 * self.genre + self.bits[m.index()] as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub n_tracks: usize,
    pub n_playlists: usize,
    pub n_genres: usize,
    pub embed_dim: usize,
    pub seed: u64,
    pub last_day: NaiveDate,
    pub n_last_day: usize,
}

pub struct SyntheticCatalog {
    pub catalog: Catalog,
    /// One matrix per modality, canonical order, covering every track.
    pub embeddings: Vec<EmbeddingMatrix>,
    pub labels: BTreeMap<String, PlantedLabels>,
    pub manifest: FixtureManifest,
}

pub fn genre_name(g: usize) -> String {
    match GENRES.get(g) {
        Some(s) => s.to_string(),
        None => format!("genre{g}"),
    }
}

fn pair_word(table: &[[&str; 2]], g: usize, bit: u8, fallback: &str) -> String {
    match table.get(g) {
        Some(p) => p[bit as usize].to_string(),
        None => format!("{fallback}{g}x{bit}"),
    }
}

pub fn mood_word(g: usize, bit: u8) -> String {
    pair_word(MOODS, g, bit, "mood")
}

pub fn theme_word(g: usize, bit: u8) -> String {
    pair_word(THEMES, g, bit, "theme")
}

pub fn audio_word(g: usize, bit: u8) -> String {
    AUDIO_WORDS[(2 * g + bit as usize) % AUDIO_WORDS.len()].to_string()
}

/// Decade of release for (genre, bit): spread over 1960..2020.
pub fn decade(g: usize, bit: u8) -> i32 {
    1960 + 10 * ((2 * g + bit as usize) % 7) as i32
}

fn artist_name(g: usize, scene: u8, j: usize) -> String {
    let idx = (2 * g + scene as usize) * 7 + j * 3;
    format!("The {} {}", TITLE_A[idx % TITLE_A.len()], ARTIST_WORDS[(idx / 2 + j) % ARTIST_WORDS.len()])
}

/// Generates the catalog and its embeddings. Pure function of `cfg`.
///
/// Panics if the configuration cannot produce a valid catalog (for example
/// zero genres or an empty playlist length range).
pub fn generate_catalog(cfg: &SyntheticCatalogConfig) -> SyntheticCatalog {
    assert!(cfg.n_genres >= 1 && cfg.n_tracks >= cfg.n_genres, "need at least one track per genre");
    assert!(cfg.min_playlist_len >= 1 && cfg.min_playlist_len <= cfg.max_playlist_len);
    assert!(cfg.n_playlists >= 1 && cfg.n_days >= 1);
    let n_last_day = ((cfg.n_playlists as f64 * cfg.last_day_fraction).round() as usize).clamp(1, cfg.n_playlists);
    assert!(cfg.artists_per_scene >= 1 && cfg.embed_dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g_count = cfg.n_genres;

    // Balanced bits: within a genre, each modality splits the tracks in half
    // by an independent random permutation.
    let mut labels_vec = Vec::with_capacity(cfg.n_tracks);
    let per_genre: Vec<Vec<usize>> = (0..g_count)
        .map(|g| (0..cfg.n_tracks).filter(|i| i % g_count == g).collect())
        .collect();
    let mut bits = vec![[0u8; 5]; cfg.n_tracks];
    for members in &per_genre {
        for m in 0..5 {
            let mut order = members.clone();
            order.shuffle(&mut rng);
            for (r, &i) in order.iter().enumerate() {
                bits[i][m] = (r % 2) as u8;
            }
        }
    }
    for (i, b) in bits.iter().enumerate() {
        labels_vec.push(PlantedLabels {
            genre: i % g_count,
            bits: *b,
        });
    }

    let mut tracks = Vec::with_capacity(cfg.n_tracks);
    for (i, lab) in labels_vec.iter().enumerate() {
        let g = lab.genre;
        let scene = lab.bits[Modality::Playlist.index()];
        let artist = artist_name(g, scene, rng.random_range(0..cfg.artists_per_scene));
        let theme = theme_word(g, lab.bits[Modality::Lyrics.index()]);
        let mut words: Vec<String> = Vec::new();
        for _ in 0..8 {
            words.push(FILLER[rng.random_range(0..FILLER.len())].to_string());
        }
        for _ in 0..3 {
            let at = rng.random_range(0..=words.len());
            words.insert(at, theme.clone());
        }
        let title = format!(
            "{} {}",
            TITLE_A[rng.random_range(0..TITLE_A.len())],
            TITLE_B[rng.random_range(0..TITLE_B.len())]
        );
        tracks.push(Track {
            track_id: format!("t{i:04}"),
            title,
            album: format!("{artist} Vol {}", 1 + rng.random_range(0..3)),
            artist,
            tags: vec![
                genre_name(g),
                mood_word(g, lab.bits[Modality::Semantic.index()]),
                audio_word(g, lab.bits[Modality::Audio.index()]),
            ],
            year: Some(decade(g, lab.bits[Modality::Metadata.index()]) + rng.random_range(0..10)),
            popularity: Some((rng.random_range(0.0..100.0f64) * 10.0).round() / 10.0),
            lyrics: Some(words.join(" ")),
        });
    }

    // scene pools: (genre, scene) -> track indices
    let mut pools: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; g_count];
    for (i, lab) in labels_vec.iter().enumerate() {
        pools[lab.genre][lab.bits[0] as usize].push(i);
    }
    let last_day = cfg.start_date + Duration::days(cfg.n_days - 1);
    let mut playlists = Vec::with_capacity(cfg.n_playlists);
    for p in 0..cfg.n_playlists {
        let g = p % g_count;
        let genre_size = pools[g][0].len() + pools[g][1].len();
        let len = rng
            .random_range(cfg.min_playlist_len..=cfg.max_playlist_len)
            .min(genre_size);
        let dominant = rng.random_range(0..2usize);
        let mut chosen: Vec<usize> = Vec::with_capacity(len);
        let mut remaining = [pools[g][0].clone(), pools[g][1].clone()];
        for _ in 0..len {
            let want = if rng.random_bool(cfg.scene_purity.clamp(0.0, 1.0)) {
                dominant
            } else {
                1 - dominant
            };
            let side = if remaining[want].is_empty() { 1 - want } else { want };
            let k = rng.random_range(0..remaining[side].len());
            chosen.push(remaining[side].swap_remove(k));
        }
        let created_at = if p < n_last_day {
            last_day
        } else if cfg.n_days > 1 {
            cfg.start_date + Duration::days(rng.random_range(0..cfg.n_days - 1))
        } else {
            last_day
        };
        playlists.push(Playlist {
            playlist_id: format!("p{p:04}"),
            created_at,
            track_ids: chosen.iter().map(|&i| format!("t{i:04}")).collect(),
        });
    }
    // decouple playlist id order from date order
    let order = sample(&mut rng, playlists.len(), playlists.len());
    let playlists: Vec<Playlist> = order
        .into_iter()
        .enumerate()
        .map(|(new_id, old)| Playlist {
            playlist_id: format!("p{new_id:04}"),
            ..playlists[old].clone()
        })
        .collect();

    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    let unit = Normal::new(0.0, 1.0 / (cfg.embed_dim as f64).sqrt()).expect("finite scale");
    let mut embeddings = Vec::with_capacity(5);
    for m in Modality::ALL {
        let centers: Vec<Vec<f64>> = (0..2 * g_count)
            .map(|_| (0..cfg.embed_dim).map(|_| unit.sample(&mut rng)).collect())
            .collect();
        let mut mat = EmbeddingMatrix::new(m, cfg.embed_dim).expect("positive dim");
        for (i, lab) in labels_vec.iter().enumerate() {
            let c = &centers[lab.cluster(m)];
            let row: Vec<f32> = c.iter().map(|x| (x + noise.sample(&mut rng)) as f32).collect();
            mat.push(format!("t{i:04}"), &row).expect("fresh finite row");
        }
        embeddings.push(mat);
    }

    let labels = labels_vec
        .iter()
        .enumerate()
        .map(|(i, l)| (format!("t{i:04}"), *l))
        .collect();
    let catalog = Catalog::new(tracks, playlists).expect("generator produces a valid catalog");
    let manifest = FixtureManifest {
        n_tracks: cfg.n_tracks,
        n_playlists: cfg.n_playlists,
        n_genres: cfg.n_genres,
        embed_dim: cfg.embed_dim,
        seed: cfg.seed,
        last_day,
        n_last_day,
    };
    SyntheticCatalog {
        catalog,
        embeddings,
        labels,
        manifest,
    }
}

/// File name used for a modality's embedding matrix in a fixture directory.
pub fn embedding_file_name(m: Modality) -> String {
    format!("{}.tpemb", m.name())
}

/// Writes `tracks.jsonl`, `playlists.jsonl`, one `<modality>.tpemb` per
/// modality, `labels.json` and `manifest.json`.
pub fn write_fixture(fx: &SyntheticCatalog, dir: &Path) -> Result<(), CatalogError> {
    fx.catalog.save(dir)?;
    for e in &fx.embeddings {
        let path = dir.join(embedding_file_name(e.modality()));
        save_embeddings(e, &path).map_err(|err| CatalogError::Invalid {
            id: path.display().to_string(),
            message: err.to_string(),
        })?;
    }
    let write_json = |name: &str, v: serde_json::Value| {
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&v).expect("json serializes"))
            .map_err(|e| crate::catalog::io_err(&path, e))
    };
    write_json("manifest.json", serde_json::to_value(&fx.manifest).expect("json serializes"))?;
    write_json("labels.json", serde_json::to_value(&fx.labels).expect("json serializes"))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<FixtureManifest, CatalogError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| crate::catalog::io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CatalogError::Parse {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}
