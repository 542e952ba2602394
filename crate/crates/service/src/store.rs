use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use crate::session::Session;
use crate::ServiceError;

pub trait SessionStore: Send + Sync {
    fn get(&self, id: &str) -> Result<Option<Session>, ServiceError>;
    fn put(&self, session: &Session) -> Result<(), ServiceError>;
}

#[derive(Default)]
pub struct MemoryStore {
    sessions: Mutex<HashMap<String, Session>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl SessionStore for MemoryStore {
    fn get(&self, id: &str) -> Result<Option<Session>, ServiceError> {
        Ok(self.sessions.lock().expect("store lock").get(id).cloned())
    }

    fn put(&self, session: &Session) -> Result<(), ServiceError> {
        self.sessions
            .lock()
            .expect("store lock")
            .insert(session.session_id.clone(), session.clone());
        Ok(())
    }
}

/// One JSON file per session, replaced atomically on every write.
pub struct FileStore {
    dir: PathBuf,
}

/// Ids map to file names, so only a conservative alphabet is accepted.
pub fn is_valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if !is_valid_session_id(id) {
            return Err(ServiceError::NotFound(format!("session {id:?}")));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }
}

impl SessionStore for FileStore {
    fn get(&self, id: &str) -> Result<Option<Session>, ServiceError> {
        let path = match self.path(id) {
            Ok(p) => p,
            Err(_) => return Ok(None),
        };
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ServiceError::Store(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn put(&self, session: &Session) -> Result<(), ServiceError> {
        let path = self.path(&session.session_id)?;
        let tmp = path.with_extension("json.tmp");
        let bytes = serde_json::to_vec_pretty(session).map_err(|e| ServiceError::Store(e.to_string()))?;
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use talkplay_model::SamplingConfig;

    #[test]
    fn file_store_round_trips_and_rejects_odd_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let s = Session::new("abc-1".into(), 7, SamplingConfig::default());
        store.put(&s).unwrap();
        assert_eq!(store.get("abc-1").unwrap(), Some(s));
        assert_eq!(store.get("missing").unwrap(), None);
        assert_eq!(store.get("../etc/passwd").unwrap(), None);
        let bad = Session::new("../x".into(), 0, SamplingConfig::default());
        assert!(store.put(&bad).is_err());
    }
}
