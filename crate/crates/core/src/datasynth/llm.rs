//! Conversation synthesis through an external chat-completion endpoint.
//!
//! The transport is a trait so tests can script responses. The HTTP
//! implementation speaks the common `/chat/completions` JSON shape.

use std::collections::HashSet;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::negatives::sample_negatives;
use super::{validate_conversation, Conversation, Role, Turn};
use crate::catalog::{Catalog, Playlist, Track};

/// Id of the bundled prompt template.
pub const DEFAULT_TEMPLATE: &str = "conversation-synthesis-v1";

const TEMPLATE_V1: &str = include_str!("../../prompts/conversation_synthesis.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmClientSpec {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub key_env: String,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after the first one.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Size of the hard-negative set shown to the model.
    #[serde(default = "default_negatives")]
    pub n_negatives: usize,
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn default_key_env() -> String {
    "TALKPLAY_LLM_KEY".into()
}
fn default_template() -> String {
    DEFAULT_TEMPLATE.into()
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}
fn default_negatives() -> usize {
    5
}

impl LlmClientSpec {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            key_env: default_key_env(),
            prompt_template: default_template(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            n_negatives: default_negatives(),
            temperature: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no valid conversation after {attempts} attempts; last problem: {last}")]
    Schema { attempts: u32, last: String },
}

pub trait LlmTransport: Send + Sync {
    /// Sends one prompt and returns the raw completion text.
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    key: String,
    temperature: Option<f64>,
    gate: Gate,
}

impl HttpTransport {
    /// Reads the API key from the environment variable named in `spec`.
    pub fn new(spec: &LlmClientSpec) -> Result<Self, LlmError> {
        let key = std::env::var(&spec.key_env).map_err(|_| LlmError::MissingKey(spec.key_env.clone()))?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(spec.timeout_secs)))
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: spec.endpoint.clone(),
            model: spec.model.clone(),
            key,
            temperature: spec.temperature,
            gate: Gate {
                free: Mutex::new(spec.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        })
    }
}

impl LlmTransport for HttpTransport {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let _slot = self.gate.acquire();
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response has no choices[0].message.content".into()))
    }
}

/// Multi-line description of one track, as shown to the model.
fn track_block(t: &Track) -> String {
    let mut s = format!("Metadata:\n  Title: {}\n  Artist: {}\n", t.title, t.artist);
    if !t.album.is_empty() {
        s.push_str(&format!("  Album: {}\n", t.album));
    }
    if let Some(y) = t.year {
        s.push_str(&format!("  Year: {y}\n"));
    }
    if !t.tags.is_empty() {
        s.push_str(&format!("Tag: {}\n", t.tags.join(", ")));
    }
    if let Some(p) = t.popularity {
        s.push_str(&format!("  Popularity: {p:.1}\n"));
    }
    if let Some(l) = &t.lyrics {
        s.push_str(&format!("Lyrics: {}\n", l.trim()));
    }
    s.trim_end().to_string()
}

/// JSON object from track id to its block, in the given order.
fn track_map<'a>(tracks: impl Iterator<Item = &'a Track>) -> String {
    let entries: Vec<String> = tracks
        .map(|t| {
            format!(
                "  {}: {}",
                serde_json::to_string(&t.track_id).expect("string serializes"),
                serde_json::to_string(&track_block(t)).expect("string serializes")
            )
        })
        .collect();
    if entries.is_empty() {
        "{}".into()
    } else {
        format!("{{\n{}\n}}", entries.join(",\n"))
    }
}

/// Fills the template with the playlist's tracks and the negative set.
pub fn render_synthesis_prompt(
    template_id: &str,
    playlist: &Playlist,
    catalog: &Catalog,
    negatives: &[String],
) -> Result<String, LlmError> {
    let template = match template_id {
        DEFAULT_TEMPLATE => TEMPLATE_V1,
        other => return Err(LlmError::UnknownTemplate(other.to_string())),
    };
    let mut seen = HashSet::new();
    let members = playlist
        .track_ids
        .iter()
        .filter(|id| seen.insert(id.as_str()))
        .filter_map(|id| catalog.track(id));
    let negs = negatives.iter().filter_map(|id| catalog.track(id));
    Ok(template
        .replace("{playlist}", &track_map(members))
        .replace("{negatives}", &track_map(negs)))
}

/// Extracts the turn list from a completion. Code fences and text around the
/// outermost `[...]` are ignored.
pub fn parse_llm_answer(text: &str) -> Result<Vec<Turn>, String> {
    let start = text.find('[').ok_or("no JSON array in answer")?;
    let end = text.rfind(']').ok_or("no JSON array in answer")?;
    if end < start {
        return Err("no JSON array in answer".into());
    }
    serde_json::from_str::<Vec<Turn>>(&text[start..=end]).map_err(|e| format!("bad turn list: {e}"))
}

/// Asks the model for a conversation about `playlist`, retrying invalid or
/// failed answers up to `spec.max_retries` times.
pub fn synthesize_llm(
    playlist: &Playlist,
    catalog: &Catalog,
    spec: &LlmClientSpec,
    transport: &dyn LlmTransport,
    seed: u64,
) -> Result<Conversation, LlmError> {
    let negatives = sample_negatives(playlist, catalog, spec.n_negatives, seed);
    let prompt = render_synthesis_prompt(&spec.prompt_template, playlist, catalog, &negatives)?;
    let allowed: HashSet<&str> = playlist
        .track_ids
        .iter()
        .chain(negatives.iter())
        .map(|s| s.as_str())
        .collect();
    let attempts = spec.max_retries + 1;
    let mut last = String::new();
    let mut last_transport = None;
    for attempt in 1..=attempts {
        let raw = match transport.complete(&prompt) {
            Ok(r) => r,
            Err(e @ LlmError::Transport(_)) => {
                log::warn!("attempt {attempt}/{attempts}: {e}");
                last_transport = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        last_transport = None;
        let turns = match parse_llm_answer(&raw) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("attempt {attempt}/{attempts}: {e}");
                last = e;
                continue;
            }
        };
        let conv = Conversation {
            conversation_id: format!("{}-llm-{seed}", playlist.playlist_id),
            source_playlist_id: playlist.playlist_id.clone(),
            turns,
        }
        .normalized();
        let mut problems: Vec<String> = match validate_conversation(&conv, catalog) {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(|x| x.to_string()).collect(),
        };
        for (i, t) in conv.turns.iter().enumerate() {
            if t.role == Role::Music && catalog.contains(&t.content) && !allowed.contains(t.content.as_str()) {
                problems.push(format!("turn {i}: track {:?} is outside the playlist and negative set", t.content));
            }
        }
        if problems.is_empty() {
            return Ok(conv);
        }
        last = problems.join("; ");
        log::warn!("attempt {attempt}/{attempts}: {last}");
    }
    match last_transport {
        Some(e) => Err(e),
        None => Err(LlmError::Schema { attempts, last }),
    }
}
