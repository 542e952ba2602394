use std::collections::{HashMap, HashSet};

use talkplay_core::catalog::{load_catalog, Catalog, Track};
use talkplay_core::datasynth::{Role, Turn, REJECTION_PREFIX};
use talkplay_core::eval::{derive_seed, render_turn_prompt};
use talkplay_core::retrieval::{RankedList, TokenIndex, WeightProfile};
use talkplay_core::tokenizer::MusicTokenSeq;
use talkplay_model::{load_checkpoint, ModelRunner};
use uuid::Uuid;

use crate::config::ServiceConfig;
use crate::session::{
    ChatResponse, CreateSessionRequest, Feedback, MessageRequest, Recommendation, Session, SessionView,
    TrackView, TurnView,
};
use crate::ServiceError;

const NO_MATCH_TEXT: &str = "I could not find a track for that. Could you describe it another way?";

/// Read-only model, index and catalog shared by all sessions.
pub struct Engine {
    runner: ModelRunner,
    index: TokenIndex,
    tracks: HashMap<String, Track>,
    weights: WeightProfile,
    top_n: usize,
    attempts: usize,
}

impl Engine {
    pub fn new(
        runner: ModelRunner,
        index: TokenIndex,
        catalog: &Catalog,
        weights: WeightProfile,
        top_n: usize,
        attempts: usize,
    ) -> Result<Self, ServiceError> {
        if runner.vocab() != index.vocab() {
            return Err(ServiceError::Config(format!(
                "model vocabulary {:?} differs from index vocabulary {:?}",
                runner.vocab(),
                index.vocab()
            )));
        }
        if let Some(id) = index.items().keys().find(|id| !catalog.contains(id)) {
            return Err(ServiceError::Config(format!("indexed track {id} is not in the catalog")));
        }
        if top_n == 0 || attempts == 0 {
            return Err(ServiceError::Config("top_n and attempts must be >= 1".into()));
        }
        runner
            .config()
            .sampling
            .validate()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        let tracks = catalog
            .tracks()
            .iter()
            .map(|t| (t.track_id.clone(), t.clone()))
            .collect();
        Ok(Self {
            runner,
            index,
            tracks,
            weights,
            top_n,
            attempts,
        })
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let ckpt = load_checkpoint(&cfg.checkpoint, None).map_err(|e| ServiceError::Config(e.to_string()))?;
        let index = TokenIndex::load(&cfg.index).map_err(|e| ServiceError::Config(e.to_string()))?;
        let vocab = ckpt.vocab.unwrap_or(*index.vocab());
        let runner = ModelRunner::new(ckpt.state.model, vocab, cfg.runner)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        let catalog = load_catalog(&cfg.catalog).map_err(|e| ServiceError::Config(e.to_string()))?;
        Self::new(runner, index, &catalog, cfg.weight_profile()?, cfg.top_n, cfg.attempts)
    }

    pub fn runner(&self) -> &ModelRunner {
        &self.runner
    }

    pub fn index(&self) -> &TokenIndex {
        &self.index
    }

    pub fn create_session(&self, req: &CreateSessionRequest) -> Result<Session, ServiceError> {
        let sampling = req.sampling.apply(self.runner.config().sampling);
        sampling
            .validate()
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let seed = req.seed.unwrap_or_else(rand::random);
        Ok(Session::new(Uuid::new_v4().to_string(), seed, sampling))
    }

    fn user_turn_text(req: &MessageRequest) -> Result<String, ServiceError> {
        let text = req.text.trim();
        match req.feedback {
            Feedback::Reject => Ok(format!("{REJECTION_PREFIX}{text}").trim_end().to_string()),
            _ if text.is_empty() => Err(ServiceError::BadRequest("text must not be empty".into())),
            _ => Ok(text.to_string()),
        }
    }

    /// Generates, retrieves and, on success, appends one exchange to
    /// `session`. The result depends only on the session state and the
    /// request.
    pub fn post_message(&self, session: &mut Session, req: &MessageRequest) -> Result<ChatResponse, ServiceError> {
        let user_text = Self::user_turn_text(req)?;
        let vocab = self.runner.vocab();
        let conversation = session.conversation();
        let history = conversation.exchanges();
        let turn_index = history.len();
        let prompt = render_turn_prompt(vocab, &history, &user_text, &self.index)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;

        let exhausted = self
            .index
            .items()
            .keys()
            .all(|id| session.shown_track_ids.contains(id));
        if exhausted {
            session.shown_track_ids.clear();
            session.exclusion_resets += 1;
        }
        let exclude: HashSet<String> = session.shown_track_ids.iter().cloned().collect();

        let mut last: Option<MusicTokenSeq> = None;
        for attempt in 0..self.attempts {
            let seed = derive_seed(session.seed, turn_index as u64, attempt as u64);
            let (seq, text) = self
                .runner
                .respond_with(&prompt, seed, &session.sampling)
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            let ranked = self.index.recommend(&seq, &self.weights, self.top_n, &exclude);
            if ranked.is_empty() {
                last = Some(seq);
                continue;
            }
            let top = ranked.0[0].track_id.clone();
            let assistant_text = if text.is_empty() {
                let t = &self.tracks[&top];
                format!("Here is {} by {}.", t.title, t.artist)
            } else {
                text
            };
            session.turns.push(Turn::user(user_text));
            session.turns.push(Turn::music(top.clone()));
            session.turns.push(Turn::assistant(assistant_text.clone()));
            session.shown_track_ids.insert(top);
            return Ok(ChatResponse {
                recommendations: self.recommendations(&ranked),
                assistant_text,
                generated_music_tokens: self.block_surface(&seq),
                turn_index,
                exclusion_reset: exhausted,
                no_recommendation: false,
            });
        }
        Ok(ChatResponse {
            recommendations: Vec::new(),
            assistant_text: NO_MATCH_TEXT.into(),
            generated_music_tokens: last.map(|s| self.block_surface(&s)).unwrap_or_default(),
            turn_index,
            exclusion_reset: exhausted,
            no_recommendation: true,
        })
    }

    fn block_surface(&self, seq: &MusicTokenSeq) -> Vec<String> {
        let vocab = self.runner.vocab();
        let mut ids = Vec::with_capacity(7);
        vocab.push_music_block(&mut ids, seq);
        ids.iter()
            .map(|&id| vocab.surface(id).expect("grammar-constrained block"))
            .collect()
    }

    fn recommendations(&self, ranked: &RankedList) -> Vec<Recommendation> {
        ranked
            .0
            .iter()
            .map(|s| {
                let t = &self.tracks[&s.track_id];
                Recommendation {
                    track_id: s.track_id.clone(),
                    title: t.title.clone(),
                    artist: t.artist.clone(),
                    score: s.score,
                    matched_modalities: s.matched.modalities().iter().map(|m| m.to_string()).collect(),
                }
            })
            .collect()
    }

    pub fn track_view(&self, id: &str) -> Option<TrackView> {
        let t = self.tracks.get(id)?;
        let music_tokens = self
            .index
            .items()
            .get(id)
            .and_then(|seq| self.runner.vocab().item_surface(seq).ok());
        Some(TrackView {
            track_id: t.track_id.clone(),
            title: t.title.clone(),
            artist: t.artist.clone(),
            album: t.album.clone(),
            tags: t.tags.clone(),
            year: t.year,
            popularity: t.popularity,
            music_tokens,
        })
    }

    pub fn session_view(&self, s: &Session) -> SessionView {
        SessionView {
            session_id: s.session_id.clone(),
            created_at: s.created_at,
            seed: s.seed,
            sampling: s.sampling,
            turns: s
                .turns
                .iter()
                .map(|t| TurnView {
                    role: t.role,
                    content: t.content.clone(),
                    track: (t.role == Role::Music).then(|| self.track_view(&t.content)).flatten(),
                })
                .collect(),
            shown_track_ids: s.shown_track_ids.iter().cloned().collect(),
            exclusion_resets: s.exclusion_resets,
        }
    }
}
