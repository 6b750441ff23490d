//! Persistence of user models and transcripts.
//!
//! Each (user, robot) pair owns a model document `<root>/<user>/<robot>.json`
//! and a transcript `<root>/<user>/<robot>.log.jsonl`. A missing document
//! loads as an empty model.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{
    MemoryRecord, PropertyFamily, PropertyKey, RecallStatus, UserModel, Valence, Value,
    SCHEMA_VERSION,
};
use crate::persona::RobotId;
use crate::transcript::{parse_jsonl, TranscriptLine};

pub type UpdateError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid user id `{0}`")]
    InvalidUserId(String),
    #[error("corrupt model {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("corrupt transcript {path} at line {line}: {reason}")]
    CorruptTranscript {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("update rejected: {0}")]
    Update(UpdateError),
    #[error("storage I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Storage backend for user models and transcripts.
///
/// Implementations serialize operations on the same (user, robot) pair.
pub trait ModelStore: Send + Sync {
    fn load(&self, user_id: &str, robot: RobotId) -> Result<UserModel, StoreError>;

    fn save(&self, model: &UserModel) -> Result<(), StoreError>;

    /// Loads, transforms and saves a model while holding the pair's lock.
    fn update(
        &self,
        user_id: &str,
        robot: RobotId,
        f: &mut dyn FnMut(UserModel) -> Result<UserModel, UpdateError>,
    ) -> Result<UserModel, StoreError>;

    fn append_transcript(&self, line: &TranscriptLine) -> Result<(), StoreError>;

    fn read_transcript(
        &self,
        user_id: &str,
        robot: RobotId,
    ) -> Result<Vec<TranscriptLine>, StoreError>;
}

/// User ids double as directory names.
pub fn validate_user_id(user_id: &str) -> Result<(), StoreError> {
    let ok = !user_id.is_empty()
        && user_id.len() <= 128
        && !user_id.starts_with('.')
        && user_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidUserId(user_id.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDoc {
    family: PropertyFamily,
    param: Option<String>,
    value: String,
    probability: f64,
    status: RecallStatus,
    observed_valence: Option<Valence>,
    session_observed: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: u32,
    user_id: String,
    robot: RobotId,
    #[serde(default)]
    completed_sessions: u32,
    records: Vec<RecordDoc>,
}

/// Serializes a model to its document form.
pub fn encode_model(model: &UserModel) -> String {
    let doc = ModelDoc {
        schema_version: model.schema_version,
        user_id: model.user_id.clone(),
        robot: model.robot,
        completed_sessions: model.completed_sessions,
        records: model
            .records()
            .map(|r| RecordDoc {
                family: r.key.family(),
                param: r.key.param().map(str::to_string),
                value: r.value.as_text().to_string(),
                probability: r.probability,
                status: r.status,
                observed_valence: r.observed_valence,
                session_observed: r.session_observed,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

/// Parses a model document and checks every invariant a saved model holds.
pub fn decode_model(text: &str) -> Result<UserModel, String> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "schema version {} is not {SCHEMA_VERSION}",
            doc.schema_version
        ));
    }
    let mut model = UserModel::new(doc.user_id, doc.robot);
    model.completed_sessions = doc.completed_sessions;
    for r in doc.records {
        let key = PropertyKey::new(r.family, r.param.as_deref()).map_err(|e| e.to_string())?;
        let value = Value::parse_for(r.family, &r.value).map_err(|e| format!("`{key}`: {e}"))?;
        if value.as_text() != r.value {
            return Err(format!("`{key}` value {:?} is not normalized", r.value));
        }
        let record = MemoryRecord {
            key,
            value,
            probability: r.probability,
            status: r.status,
            observed_valence: r.observed_valence,
            session_observed: r.session_observed,
        };
        record.check(model.robot)?;
        if model.get(&record.key).is_some() {
            return Err(format!("`{}` appears twice", record.key));
        }
        model.insert(record);
    }
    let shared: BTreeSet<&str> = model
        .family(PropertyFamily::SharedFavourite)
        .filter_map(|r| r.key.param())
        .collect();
    if let Some(both) = model
        .family(PropertyFamily::Favourite)
        .filter_map(|r| r.key.param())
        .find(|c| shared.contains(c))
    {
        return Err(format!(
            "`{both}` is stored both as favourite and shared favourite"
        ));
    }
    Ok(model)
}

type PairKey = (String, RobotId);

#[derive(Debug, Default)]
struct PairLocks(Mutex<HashMap<PairKey, Arc<Mutex<()>>>>);

impl PairLocks {
    fn get(&self, user_id: &str, robot: RobotId) -> Arc<Mutex<()>> {
        let mut map = self.0.lock().unwrap_or_else(|e| e.into_inner());
        map.entry((user_id.to_string(), robot)).or_default().clone()
    }
}

/// Store backed by JSON files under a root directory.
#[derive(Debug)]
pub struct JsonFileStore {
    root: PathBuf,
    locks: PairLocks,
}

impl JsonFileStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            locks: PairLocks::default(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn user_dir(&self, user_id: &str) -> Result<PathBuf, StoreError> {
        validate_user_id(user_id)?;
        Ok(self.root.join(user_id))
    }

    pub fn model_path(&self, user_id: &str, robot: RobotId) -> Result<PathBuf, StoreError> {
        Ok(self
            .user_dir(user_id)?
            .join(format!("{}.json", robot.as_str())))
    }

    pub fn transcript_path(&self, user_id: &str, robot: RobotId) -> Result<PathBuf, StoreError> {
        Ok(self
            .user_dir(user_id)?
            .join(format!("{}.log.jsonl", robot.as_str())))
    }

    fn load_unlocked(&self, user_id: &str, robot: RobotId) -> Result<UserModel, StoreError> {
        let path = self.model_path(user_id, robot)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Ok(UserModel::new(user_id, robot))
            }
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: String| StoreError::Corrupt {
            path: path.display().to_string(),
            reason,
        };
        let model = decode_model(&text).map_err(corrupt)?;
        if model.user_id != user_id || model.robot != robot {
            return Err(corrupt(format!(
                "document belongs to ({}, {})",
                model.user_id, model.robot
            )));
        }
        Ok(model)
    }

    fn save_unlocked(&self, model: &UserModel) -> Result<(), StoreError> {
        let path = self.model_path(&model.user_id, model.robot)?;
        let dir = path.parent().expect("model path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.json.tmp", model.robot.as_str()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(encode_model(model).as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

impl ModelStore for JsonFileStore {
    fn load(&self, user_id: &str, robot: RobotId) -> Result<UserModel, StoreError> {
        validate_user_id(user_id)?;
        let lock = self.locks.get(user_id, robot);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.load_unlocked(user_id, robot)
    }

    fn save(&self, model: &UserModel) -> Result<(), StoreError> {
        validate_user_id(&model.user_id)?;
        let lock = self.locks.get(&model.user_id, model.robot);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.save_unlocked(model)
    }

    fn update(
        &self,
        user_id: &str,
        robot: RobotId,
        f: &mut dyn FnMut(UserModel) -> Result<UserModel, UpdateError>,
    ) -> Result<UserModel, StoreError> {
        validate_user_id(user_id)?;
        let lock = self.locks.get(user_id, robot);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let next = f(self.load_unlocked(user_id, robot)?).map_err(StoreError::Update)?;
        self.save_unlocked(&next)?;
        Ok(next)
    }

    fn append_transcript(&self, line: &TranscriptLine) -> Result<(), StoreError> {
        let path = self.transcript_path(&line.user_id, line.robot)?;
        let lock = self.locks.get(&line.user_id, line.robot);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        fs::create_dir_all(path.parent().expect("transcript path has a parent"))?;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        writeln!(f, "{}", line.to_json())?;
        Ok(())
    }

    fn read_transcript(
        &self,
        user_id: &str,
        robot: RobotId,
    ) -> Result<Vec<TranscriptLine>, StoreError> {
        let path = self.transcript_path(user_id, robot)?;
        let lock = self.locks.get(user_id, robot);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        parse_jsonl(&text).map_err(|(line, e)| StoreError::CorruptTranscript {
            path: path.display().to_string(),
            line,
            reason: e.to_string(),
        })
    }
}

/// In-process store, used for replay and tests. Models pass through the
/// document encoding so it accepts exactly what the file store accepts.
#[derive(Debug, Default)]
pub struct MemoryStore {
    models: Mutex<HashMap<PairKey, String>>,
    transcripts: Mutex<HashMap<PairKey, Vec<TranscriptLine>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn decode(text: &str) -> Result<UserModel, StoreError> {
        decode_model(text).map_err(|reason| StoreError::Corrupt {
            path: "<memory>".into(),
            reason,
        })
    }
}

impl ModelStore for MemoryStore {
    fn load(&self, user_id: &str, robot: RobotId) -> Result<UserModel, StoreError> {
        validate_user_id(user_id)?;
        let models = self.models.lock().unwrap_or_else(|e| e.into_inner());
        match models.get(&(user_id.to_string(), robot)) {
            Some(text) => Self::decode(text),
            None => Ok(UserModel::new(user_id, robot)),
        }
    }

    fn save(&self, model: &UserModel) -> Result<(), StoreError> {
        validate_user_id(&model.user_id)?;
        let text = encode_model(model);
        Self::decode(&text)?;
        let mut models = self.models.lock().unwrap_or_else(|e| e.into_inner());
        models.insert((model.user_id.clone(), model.robot), text);
        Ok(())
    }

    fn update(
        &self,
        user_id: &str,
        robot: RobotId,
        f: &mut dyn FnMut(UserModel) -> Result<UserModel, UpdateError>,
    ) -> Result<UserModel, StoreError> {
        validate_user_id(user_id)?;
        let mut models = self.models.lock().unwrap_or_else(|e| e.into_inner());
        let key = (user_id.to_string(), robot);
        let current = match models.get(&key) {
            Some(text) => Self::decode(text)?,
            None => UserModel::new(user_id, robot),
        };
        let next = f(current).map_err(StoreError::Update)?;
        let text = encode_model(&next);
        Self::decode(&text)?;
        models.insert(key, text);
        Ok(next)
    }

    fn append_transcript(&self, line: &TranscriptLine) -> Result<(), StoreError> {
        validate_user_id(&line.user_id)?;
        let mut t = self.transcripts.lock().unwrap_or_else(|e| e.into_inner());
        t.entry((line.user_id.clone(), line.robot))
            .or_default()
            .push(line.clone());
        Ok(())
    }

    fn read_transcript(
        &self,
        user_id: &str,
        robot: RobotId,
    ) -> Result<Vec<TranscriptLine>, StoreError> {
        validate_user_id(user_id)?;
        let t = self.transcripts.lock().unwrap_or_else(|e| e.into_inner());
        Ok(t.get(&(user_id.to_string(), robot))
            .cloned()
            .unwrap_or_default())
    }
}
