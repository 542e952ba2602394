use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use talkplay_core::datasynth::{Conversation, Role, Turn};
use talkplay_model::SamplingConfig;

/// Persisted chat state. `turns` always forms complete
/// user, music, assistant exchanges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub sampling: SamplingConfig,
    pub turns: Vec<Turn>,
    /// Tracks already recommended since the last exclusion reset.
    pub shown_track_ids: BTreeSet<String>,
    #[serde(default)]
    pub exclusion_resets: u32,
}

impl Session {
    pub fn new(session_id: String, seed: u64, sampling: SamplingConfig) -> Self {
        Self {
            session_id,
            created_at: Utc::now(),
            seed,
            sampling,
            turns: Vec::new(),
            shown_track_ids: BTreeSet::new(),
            exclusion_resets: 0,
        }
    }

    pub fn conversation(&self) -> Conversation {
        Conversation {
            conversation_id: self.session_id.clone(),
            source_playlist_id: String::new(),
            turns: self.turns.clone(),
        }
    }

    pub fn exchange_count(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Music).count()
    }
}

/// Client-tunable sampling settings; unset fields keep the server default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingOverrides {
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub repetition_penalty: Option<f64>,
}

impl SamplingOverrides {
    pub fn apply(&self, base: SamplingConfig) -> SamplingConfig {
        SamplingConfig {
            temperature: self.temperature.unwrap_or(base.temperature),
            top_p: self.top_p.unwrap_or(base.top_p),
            repetition_penalty: self.repetition_penalty.unwrap_or(base.repetition_penalty),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    /// Base seed for every generation in the session; random when absent.
    pub seed: Option<u64>,
    #[serde(default)]
    pub sampling: SamplingOverrides,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    Accept,
    Reject,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRequest {
    #[serde(default)]
    pub text: String,
    /// Feedback on the previous recommendation.
    #[serde(default)]
    pub feedback: Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub track_id: String,
    pub title: String,
    pub artist: String,
    pub score: f64,
    pub matched_modalities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub recommendations: Vec<Recommendation>,
    pub assistant_text: String,
    /// Surface strings of the generated block, `<start_of_music>` through
    /// `<end_of_music>`.
    pub generated_music_tokens: Vec<String>,
    /// 0-based exchange index of this message.
    pub turn_index: usize,
    /// True when every catalog track had been shown and the exclusion set
    /// was cleared for this message.
    pub exclusion_reset: bool,
    /// True when no attempt produced a retrievable block. Nothing is appended
    /// to the session in that case.
    pub no_recommendation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackView {
    pub track_id: String,
    pub title: String,
    pub artist: String,
    pub album: String,
    pub tags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub popularity: Option<f64>,
    /// Item token surface, when the track is indexed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub music_tokens: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnView {
    pub role: Role,
    pub content: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track: Option<TrackView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub sampling: SamplingConfig,
    pub turns: Vec<TurnView>,
    pub shown_track_ids: Vec<String>,
    pub exclusion_resets: u32,
}
