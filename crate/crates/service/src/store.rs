//! Session registry with optional on-disk choice logs.
//!
//! Each session is persisted as `<id>.json` holding the pipeline source,
//! the machine parameters and the list of choices made so far. Loading a
//! directory replays every log.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use tilewise::cost::MachineParams;
use tilewise::guide::{Choice, GuideError, Session};
use tilewise::ir::{parse_pipeline, ParseError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("pipeline: {0}")]
    Pipeline(#[from] ParseError),
    #[error("machine parameters: {0}")]
    Machine(String),
    #[error(transparent)]
    Guide(#[from] GuideError),
    #[error("session store: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionLog {
    pub pipeline_source: String,
    pub machine: MachineParams,
    pub choices: Vec<Choice>,
}

pub struct Entry {
    pub session: Session,
    pub source: String,
}

impl Entry {
    pub fn log(&self) -> SessionLog {
        SessionLog {
            pipeline_source: self.source.clone(),
            machine: self.session.machine().clone(),
            choices: self.session.log().to_vec(),
        }
    }
}

pub type Handle = Arc<Mutex<Entry>>;

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Handle>>,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Store persisting to `dir`, with every log already there replayed.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|e| StoreError::Io(e.to_string()))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| StoreError::Io(e.to_string()))?;
        for item in entries {
            let path = item.map_err(|e| StoreError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| StoreError::Io(e.to_string()))?;
            let log: SessionLog =
                serde_json::from_str(&text).map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
            let entry = replay(&log)?;
            sessions.insert(id, Arc::new(Mutex::new(entry)));
        }
        Ok(SessionStore { sessions: RwLock::new(sessions), dir: Some(dir.to_path_buf()) })
    }

    pub fn create(&self, source: &str, machine: Option<MachineParams>) -> Result<(String, Handle), StoreError> {
        let machine = machine.unwrap_or_default();
        machine.validate().map_err(StoreError::Machine)?;
        let entry = replay(&SessionLog { pipeline_source: source.to_string(), machine, choices: Vec::new() })?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.persist(&id, &entry)?;
        let handle = Arc::new(Mutex::new(entry));
        self.sessions.write().expect("store lock").insert(id.clone(), handle.clone());
        Ok((id, handle))
    }

    pub fn get(&self, id: &str) -> Result<Handle, StoreError> {
        self.sessions.read().expect("store lock").get(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Writes the session's log; call while holding the session's lock.
    pub fn persist(&self, id: &str, entry: &Entry) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let text = serde_json::to_string_pretty(&entry.log()).map_err(|e| StoreError::Io(e.to_string()))?;
        let tmp = dir.join(format!("{id}.json.tmp"));
        std::fs::write(&tmp, text).map_err(|e| StoreError::Io(e.to_string()))?;
        std::fs::rename(&tmp, dir.join(format!("{id}.json"))).map_err(|e| StoreError::Io(e.to_string()))
    }
}

pub fn replay(log: &SessionLog) -> Result<Entry, StoreError> {
    log.machine.validate().map_err(StoreError::Machine)?;
    let pipeline = parse_pipeline(&log.pipeline_source)?;
    let session = Session::replay(pipeline, log.machine.clone(), &log.choices)?;
    Ok(Entry { session, source: log.pipeline_source.clone() })
}
