//! Multi-turn recommendation conversations: schema, validation, hard
//! negatives, and two synthesizers (template rules and an external LLM).

mod llm;
mod negatives;
mod rules;

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::retrieval::TokenIndex;

pub use llm::{
    parse_llm_answer, render_synthesis_prompt, synthesize_llm, HttpTransport, LlmClientSpec, LlmError,
    LlmTransport,
};
pub use negatives::{negative_pool, sample_negatives};
pub(crate) use rules::AUDIO_WORDS;
pub use rules::{synthesize_rule_based, RuleSynthParams, SynthError, REJECTION_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Music,
    Assistant,
}

/// One turn. For `Music` the content is a track id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: text.into(),
        }
    }

    pub fn music(track_id: impl Into<String>) -> Self {
        Self {
            role: Role::Music,
            content: track_id.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub source_playlist_id: String,
    pub turns: Vec<Turn>,
}

/// One user → music → assistant triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exchange<'a> {
    pub user: &'a str,
    pub track_id: &'a str,
    pub assistant: &'a str,
}

impl Conversation {
    /// Reorders each exchange to user → music → assistant. Turns that do not
    /// form a recognizable exchange are kept in place.
    pub fn normalized(&self) -> Conversation {
        let t = &self.turns;
        let mut out = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            if i + 2 < t.len()
                && t[i].role == Role::User
                && t[i + 1].role == Role::Assistant
                && t[i + 2].role == Role::Music
            {
                out.push(t[i].clone());
                out.push(t[i + 2].clone());
                out.push(t[i + 1].clone());
                i += 3;
            } else {
                out.push(t[i].clone());
                i += 1;
            }
        }
        Conversation {
            conversation_id: self.conversation_id.clone(),
            source_playlist_id: self.source_playlist_id.clone(),
            turns: out,
        }
    }

    /// Exchanges of a structurally valid conversation, in order.
    pub fn exchanges(&self) -> Vec<Exchange<'_>> {
        let mut out = Vec::new();
        let t = &self.turns;
        let mut i = 0;
        while i + 2 < t.len() {
            let (a, b, c) = (&t[i], &t[i + 1], &t[i + 2]);
            match (a.role, b.role, c.role) {
                (Role::User, Role::Music, Role::Assistant) => out.push(Exchange {
                    user: &a.content,
                    track_id: &b.content,
                    assistant: &c.content,
                }),
                (Role::User, Role::Assistant, Role::Music) => out.push(Exchange {
                    user: &a.content,
                    track_id: &c.content,
                    assistant: &b.content,
                }),
                _ => break,
            }
            i += 3;
        }
        out
    }

    pub fn track_ids(&self) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .filter(|t| t.role == Role::Music)
            .map(|t| t.content.as_str())
    }
}

/// Resolves track ids for validation.
pub trait TrackResolver {
    fn resolves(&self, track_id: &str) -> bool;
}

impl TrackResolver for Catalog {
    fn resolves(&self, track_id: &str) -> bool {
        self.contains(track_id)
    }
}

impl TrackResolver for TokenIndex {
    fn resolves(&self, track_id: &str) -> bool {
        self.items().contains_key(track_id)
    }
}

impl TrackResolver for HashSet<String> {
    fn resolves(&self, track_id: &str) -> bool {
        self.contains(track_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 0-based turn index, when the problem is local to one turn.
    pub turn: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.turn {
            Some(t) => write!(f, "turn {t}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks exchange structure, track resolution and non-empty texts.
/// Returns every violation found.
pub fn validate_conversation(
    conv: &Conversation,
    tracks: &impl TrackResolver,
) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let t = &conv.turns;
    if t.is_empty() {
        v.push(Violation {
            turn: None,
            message: "conversation has no turns".into(),
        });
        return Err(v);
    }
    if t[0].role != Role::User {
        v.push(Violation {
            turn: Some(0),
            message: "first turn must be user".into(),
        });
    }
    for (i, turn) in t.iter().enumerate() {
        match turn.role {
            Role::Music => {
                if !tracks.resolves(&turn.content) {
                    v.push(Violation {
                        turn: Some(i),
                        message: format!("unknown track {:?}", turn.content),
                    });
                }
            }
            Role::User | Role::Assistant => {
                if turn.content.trim().is_empty() {
                    v.push(Violation {
                        turn: Some(i),
                        message: format!("empty {} text", if turn.role == Role::User { "user" } else { "assistant" }),
                    });
                }
            }
        }
    }
    // exchange structure: user followed by one music and one assistant turn
    let mut i = 0;
    while i < t.len() {
        if t[i].role != Role::User {
            if i > 0 {
                v.push(Violation {
                    turn: Some(i),
                    message: "expected a user turn to open the exchange".into(),
                });
            }
            i += 1;
            continue;
        }
        let rest: Vec<Role> = t[i + 1..t.len().min(i + 3)].iter().map(|x| x.role).collect();
        match rest.as_slice() {
            [Role::Music, Role::Assistant] | [Role::Assistant, Role::Music] => i += 3,
            _ => {
                v.push(Violation {
                    turn: Some(i),
                    message: "user turn must be followed by one music and one assistant turn".into(),
                });
                i += 1 + rest.iter().take_while(|r| **r != Role::User).count();
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConversationIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Either our wrapped form or a bare list of turns.
#[derive(Deserialize)]
#[serde(untagged)]
enum ConversationLine {
    Full(Conversation),
    Bare(Vec<Turn>),
}

/// Reads line-delimited conversations. Bare turn lists get ids `line-<n>`.
pub fn read_conversations(path: &Path) -> Result<Vec<Conversation>, ConversationIoError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ConversationLine = serde_json::from_str(&line).map_err(|e| ConversationIoError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(match parsed {
            ConversationLine::Full(c) => c,
            ConversationLine::Bare(turns) => Conversation {
                conversation_id: format!("line-{}", i + 1),
                source_playlist_id: String::new(),
                turns,
            },
        });
    }
    Ok(out)
}

pub fn write_conversations(path: &Path, convs: &[Conversation]) -> Result<(), ConversationIoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for c in convs {
        writeln!(w, "{}", serde_json::to_string(c).expect("conversations serialize"))?;
    }
    w.flush()?;
    Ok(())
}
