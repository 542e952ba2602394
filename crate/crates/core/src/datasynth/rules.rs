//! Template-based conversation synthesis.
//!
//! Each recommended track gets a user query phrased around one target
//! modality class (semantic tags, metadata, lyrics, audio descriptors),
//! derived from that track's own fields. Rejections use hard negatives.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::negatives::sample_negatives;
use super::{Conversation, Turn};
use crate::catalog::{Catalog, Playlist, Track};

/// Prepended to the user query that follows a rejected recommendation.
pub const REJECTION_PREFIX: &str = "not that one, play something different. ";

/// Tags treated as audio descriptors rather than semantic ones.
pub(crate) const AUDIO_WORDS: &[&str] = &[
    "acoustic", "bouncy", "chill", "driving", "dreamy", "energetic", "fast", "groovy", "heavy",
    "laid-back", "loud", "mellow", "slow", "smooth", "soft", "upbeat",
];

const STOPWORDS: &[&str] = &[
    "that", "this", "with", "from", "your", "have", "they", "will", "what", "when", "were", "there",
    "their", "about", "been", "just", "like", "into", "over", "then",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSynthParams {
    /// Probability that a recommendation is preceded by a rejected negative.
    pub p_reject: f64,
}

impl Default for RuleSynthParams {
    fn default() -> Self {
        Self { p_reject: 0.25 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("playlist {0:?} has fewer than two tracks")]
    TooShort(String),
    #[error("track {0:?} is not in the catalog")]
    UnknownTrack(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QueryClass {
    Semantic,
    Metadata,
    Lyrics,
    Audio,
}

const FOLLOW_UP_CLASSES: [QueryClass; 4] = [
    QueryClass::Metadata,
    QueryClass::Lyrics,
    QueryClass::Audio,
    QueryClass::Semantic,
];

struct TrackTraits<'a> {
    genre: Option<&'a str>,
    descriptors: Vec<&'a str>,
    audio: Vec<&'a str>,
    decade: Option<String>,
    lyric_keyword: Option<String>,
}

fn traits(track: &Track) -> TrackTraits<'_> {
    let genre = track.tags.first().map(|s| s.as_str());
    let mut descriptors = Vec::new();
    let mut audio = Vec::new();
    for tag in track.tags.iter().skip(1) {
        if AUDIO_WORDS.contains(&tag.to_lowercase().as_str()) {
            audio.push(tag.as_str());
        } else {
            descriptors.push(tag.as_str());
        }
    }
    let decade = track.year.map(|y| {
        let d = y - y.rem_euclid(10);
        if (1900..2000).contains(&d) {
            format!("{}s", d % 100)
        } else {
            format!("{d}s")
        }
    });
    TrackTraits {
        genre,
        descriptors,
        audio,
        decade,
        lyric_keyword: track.lyrics.as_deref().and_then(lyric_keyword),
    }
}

/// Most frequent content word (≥4 letters) in the lyrics; earliest wins ties.
fn lyric_keyword(lyrics: &str) -> Option<String> {
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for (pos, w) in lyrics
        .split(|c: char| !c.is_alphabetic() && c != '\'')
        .map(|w| w.to_lowercase())
        .enumerate()
    {
        if w.chars().count() < 4 || STOPWORDS.contains(&w.as_str()) || w.contains('\'') {
            continue;
        }
        let e = counts.entry(w).or_insert((0, pos));
        e.0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(w, _)| w)
}

fn opening_query(t: &TrackTraits<'_>, track: &Track, rng: &mut ChaCha8Rng) -> String {
    match (t.genre, t.descriptors.choose(rng)) {
        (Some(g), Some(d)) => format!("play some {d} {g}"),
        (Some(g), None) => format!("play some {g}"),
        _ => format!("play something like {} by {}", track.title, track.artist),
    }
}

fn follow_up_query(class: QueryClass, t: &TrackTraits<'_>, track: &Track, rng: &mut ChaCha8Rng) -> String {
    let semantic = |rng: &mut ChaCha8Rng| match t.descriptors.choose(rng) {
        Some(d) => {
            if rng.random_bool(0.5) {
                format!("more {d} please")
            } else {
                format!("something {d}")
            }
        }
        None => match t.genre {
            Some(g) => format!("more {g} please"),
            None => format!("something by {}", track.artist),
        },
    };
    match class {
        QueryClass::Semantic => semantic(rng),
        QueryClass::Metadata => match &t.decade {
            Some(d) => format!("something from the {d}"),
            None => format!("something by {}", track.artist),
        },
        QueryClass::Lyrics => match &t.lyric_keyword {
            Some(k) => format!("a song about {k}"),
            None => semantic(rng),
        },
        QueryClass::Audio => match t.audio.choose(rng) {
            Some(a) => {
                if rng.random_bool(0.5) {
                    format!("something {a}")
                } else {
                    format!("make it {a}")
                }
            }
            None => semantic(rng),
        },
    }
}

fn response(track: &Track, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..3) {
        0 => format!("try {} by {}", track.title, track.artist),
        1 => format!("here is {}", track.title),
        _ => format!("how about {}?", track.title),
    }
}

/// How many playlist tracks a synthesized conversation recommends: at least
/// half, and enough to cover the four query classes when the playlist allows.
pub(crate) fn recommendation_count(playlist_len: usize) -> usize {
    playlist_len.div_ceil(2).max(playlist_len.min(4))
}

/// Builds a conversation from a playlist; a pure function of its inputs.
pub fn synthesize_rule_based(
    playlist: &Playlist,
    catalog: &Catalog,
    seed: u64,
    params: &RuleSynthParams,
) -> Result<Conversation, SynthError> {
    if playlist.track_ids.len() < 2 {
        return Err(SynthError::TooShort(playlist.playlist_id.clone()));
    }
    let lookup = |id: &str| catalog.track(id).ok_or_else(|| SynthError::UnknownTrack(id.to_string()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n = playlist.track_ids.len();
    let count = recommendation_count(n);
    let mut picked: Vec<usize> = (0..n).collect();
    picked.shuffle(&mut rng);
    picked.truncate(count);
    picked.sort_unstable();

    let negatives = sample_negatives(playlist, catalog, count, rng.random());
    let mut neg_cursor = 0;
    let class_offset = rng.random_range(0..FOLLOW_UP_CLASSES.len());

    let mut turns = Vec::new();
    for (step, &idx) in picked.iter().enumerate() {
        let track = lookup(&playlist.track_ids[idx])?;
        let t = traits(track);
        let query = if step == 0 {
            opening_query(&t, track, &mut rng)
        } else {
            let class = FOLLOW_UP_CLASSES[(class_offset + step - 1) % FOLLOW_UP_CLASSES.len()];
            follow_up_query(class, &t, track, &mut rng)
        };
        let reject = !negatives.is_empty() && rng.random_bool(params.p_reject.clamp(0.0, 1.0));
        if reject {
            let neg = lookup(&negatives[neg_cursor % negatives.len()])?;
            neg_cursor += 1;
            turns.push(Turn::user(query.clone()));
            turns.push(Turn::music(neg.track_id.clone()));
            turns.push(Turn::assistant(response(neg, &mut rng)));
            turns.push(Turn::user(format!("{REJECTION_PREFIX}{query}")));
        } else {
            turns.push(Turn::user(query));
        }
        turns.push(Turn::music(track.track_id.clone()));
        turns.push(Turn::assistant(response(track, &mut rng)));
    }
    Ok(Conversation {
        conversation_id: format!("{}-{seed}", playlist.playlist_id),
        source_playlist_id: playlist.playlist_id.clone(),
        turns,
    })
}
