//! Blocking operations behind the HTTP routes. Every call maps onto one
//! engine or store operation.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use robomem_core::dialogue::{
    DialogueEngine, DialogueState, EngineError, Phase, Reply, SideChannel,
};
use robomem_core::persona::{PersonaProfile, RobotId};
use robomem_core::recall::{RecallConfig, RecallMode};
use robomem_core::store::{encode_model, validate_user_id, JsonFileStore, ModelStore, StoreError};
use robomem_core::transcript::TranscriptLine;
use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{ApiError, ErrorCode};

const PROFILE_FILE: &str = "profile.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub user_id: String,
    pub robot: RobotId,
    pub session_index: u32,
    pub created_at: String,
}

/// Per-session recall settings; absent fields fall back to the server's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub mode: Option<String>,
    pub threshold: Option<f64>,
    pub seed: Option<u64>,
}

struct Session {
    handle: SessionHandle,
    state: Mutex<DialogueState>,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Arc<Session>>,
    /// Pairs with an open or opening session. Entries go away when the
    /// session closes or fails to open.
    open: HashSet<(String, RobotId)>,
}

pub struct Service {
    engine: DialogueEngine,
    store: Arc<JsonFileStore>,
    defaults: RecallConfig,
    registry: Mutex<Registry>,
}

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .expect("UTC timestamps always format")
}

fn storage(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(ErrorCode::StorageError, e.to_string())
}

fn engine_error(e: EngineError) -> ApiError {
    match e {
        EngineError::SessionClosed(_) => ApiError::new(ErrorCode::SessionClosed, e.to_string()),
        EngineError::InvalidSideChannel(_) => {
            ApiError::new(ErrorCode::InvalidRequest, e.to_string())
        }
        EngineError::Store(e) => store_error(e),
        EngineError::Recall(_) | EngineError::Template(_) => {
            ApiError::new(ErrorCode::Internal, e.to_string())
        }
    }
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::InvalidUserId(_) => ApiError::new(ErrorCode::UnknownUser, e.to_string()),
        _ => storage(e),
    }
}

pub fn parse_robot(raw: &str) -> Result<RobotId, ApiError> {
    raw.parse()
        .map_err(|e: robomem_core::persona::PersonaError| {
            ApiError::new(ErrorCode::UnknownRobot, e.to_string())
        })
}

impl Service {
    pub fn new(store_root: impl Into<PathBuf>, defaults: RecallConfig) -> Self {
        let store = Arc::new(JsonFileStore::new(store_root));
        Self {
            engine: DialogueEngine::new(store.clone()),
            store,
            defaults,
            registry: Mutex::default(),
        }
    }

    pub fn engine(&self) -> &DialogueEngine {
        &self.engine
    }

    pub fn personas(&self) -> Vec<&PersonaProfile> {
        self.engine.personas().iter().collect()
    }

    pub fn create_user(&self, display_name: &str) -> Result<UserProfile, ApiError> {
        let display_name = display_name.trim();
        if display_name.is_empty() {
            return Err(ApiError::new(ErrorCode::EmptyName, "display name is empty"));
        }
        let profile = UserProfile {
            user_id: uuid::Uuid::new_v4().simple().to_string(),
            display_name: display_name.to_string(),
            created_at: now(),
        };
        let dir = self.store.user_dir(&profile.user_id).map_err(storage)?;
        fs::create_dir_all(&dir).map_err(storage)?;
        let mut file = fs::File::create_new(dir.join(PROFILE_FILE)).map_err(storage)?;
        let body = serde_json::to_string_pretty(&profile).expect("profiles always serialize");
        file.write_all(body.as_bytes())
            .and_then(|()| file.sync_all())
            .map_err(storage)?;
        Ok(profile)
    }

    pub fn user(&self, user_id: &str) -> Result<UserProfile, ApiError> {
        let unknown = || ApiError::new(ErrorCode::UnknownUser, format!("no user `{user_id}`"));
        if validate_user_id(user_id).is_err() {
            return Err(unknown());
        }
        let path = self
            .store
            .user_dir(user_id)
            .map_err(storage)?
            .join(PROFILE_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(storage),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(unknown()),
            Err(e) => Err(storage(e)),
        }
    }

    fn recall_config(&self, overrides: &ConfigOverrides) -> Result<RecallConfig, ApiError> {
        let invalid = |e: robomem_core::recall::RecallError| {
            ApiError::new(ErrorCode::InvalidRequest, e.to_string())
        };
        let mode = match &overrides.mode {
            Some(m) => m.parse::<RecallMode>().map_err(invalid)?,
            None => self.defaults.mode,
        };
        let config = RecallConfig {
            mode,
            threshold: overrides.threshold.unwrap_or(self.defaults.threshold),
            seed: overrides.seed.unwrap_or(self.defaults.seed),
        };
        config.validate().map_err(invalid)?;
        Ok(config)
    }

    /// Opens a session. At most one session per (user, robot) pair is open
    /// at a time; the pair is claimed before the engine runs.
    pub fn open_session(
        &self,
        user_id: &str,
        robot: &str,
        overrides: &ConfigOverrides,
    ) -> Result<(SessionHandle, Reply), ApiError> {
        let robot = parse_robot(robot)?;
        self.user(user_id)?;
        let config = self.recall_config(overrides)?;
        let pair = (user_id.to_string(), robot);
        {
            let mut registry = self.registry.lock().expect("registry lock");
            if !registry.open.insert(pair.clone()) {
                return Err(ApiError::new(
                    ErrorCode::SessionConflict,
                    format!("{user_id} already has an open session with {robot}"),
                ));
            }
        }
        let session_id = uuid::Uuid::new_v4().to_string();
        let started = self
            .engine
            .start_session(session_id.clone(), user_id, robot, config);
        let mut registry = self.registry.lock().expect("registry lock");
        let (state, reply) = match started {
            Ok(ok) => ok,
            Err(e) => {
                registry.open.remove(&pair);
                return Err(engine_error(e));
            }
        };
        let handle = SessionHandle {
            session_id: session_id.clone(),
            user_id: user_id.to_string(),
            robot,
            session_index: state.session_index(),
            created_at: now(),
        };
        if state.phase() == Phase::Closed {
            registry.open.remove(&pair);
        }
        registry.sessions.insert(
            session_id,
            Arc::new(Session {
                handle: handle.clone(),
                state: Mutex::new(state),
            }),
        );
        Ok((handle, reply))
    }

    fn session(&self, session_id: &str) -> Result<Arc<Session>, ApiError> {
        self.registry
            .lock()
            .expect("registry lock")
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| {
                ApiError::new(
                    ErrorCode::UnknownSession,
                    format!("no session `{session_id}`"),
                )
            })
    }

    pub fn session_handle(&self, session_id: &str) -> Result<SessionHandle, ApiError> {
        Ok(self.session(session_id)?.handle.clone())
    }

    /// Feeds one user message. Messages to the same session run one at a
    /// time.
    pub fn post_message(
        &self,
        session_id: &str,
        text: &str,
        side: &SideChannel,
    ) -> Result<Reply, ApiError> {
        let session = self.session(session_id)?;
        let mut state = session.state.lock().expect("session lock");
        let reply = self
            .engine
            .step(&mut state, text, side)
            .map_err(engine_error)?;
        if reply.phase == Phase::Closed {
            let pair = (session.handle.user_id.clone(), session.handle.robot);
            self.registry
                .lock()
                .expect("registry lock")
                .open
                .remove(&pair);
        }
        Ok(reply)
    }

    /// The persisted model document of a pair.
    pub fn model(&self, user_id: &str, robot: &str) -> Result<serde_json::Value, ApiError> {
        let robot = parse_robot(robot)?;
        self.user(user_id)?;
        let model = self.store.load(user_id, robot).map_err(store_error)?;
        Ok(serde_json::from_str(&encode_model(&model)).expect("model documents are JSON"))
    }

    pub fn transcript(&self, session_id: &str) -> Result<Vec<TranscriptLine>, ApiError> {
        let handle = self.session_handle(session_id)?;
        let lines = self
            .store
            .read_transcript(&handle.user_id, handle.robot)
            .map_err(store_error)?;
        Ok(lines
            .into_iter()
            .filter(|l| l.session_id == session_id)
            .collect())
    }
}
