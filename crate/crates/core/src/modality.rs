use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five per-item signal sources.
///
/// The declaration order is the token order inside a music block:
/// coarse (playlist co-occurrence) to fine (audio).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Playlist,
    Semantic,
    Metadata,
    Lyrics,
    Audio,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown modality {0:?}")]
pub struct UnknownModality(pub String);

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Playlist,
        Modality::Semantic,
        Modality::Metadata,
        Modality::Lyrics,
        Modality::Audio,
    ];

    pub const COUNT: usize = 5;

    /// Position in the canonical modality order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Playlist => "playlist",
            Modality::Semantic => "semantic",
            Modality::Metadata => "metadata",
            Modality::Lyrics => "lyrics",
            Modality::Audio => "audio",
        }
    }

    /// Byte tag used in the binary embedding and codebook files.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::from_index(code as usize)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = UnknownModality;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownModality(s.to_string()))
    }
}
