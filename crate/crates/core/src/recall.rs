//! Session lifecycle of a user model: store everything observed, then decide
//! at the start of each later session what the robot still remembers.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::memory::{
    classify_favourite, get_probability, normalize_value, perceive_valence, InterestLevel,
    MemoryError, MemoryRecord, PropertyFamily, PropertyKey, RecallStatus, UserModel, Valence,
    Value,
};
use crate::persona::{PersonaProfile, RobotId};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecallError {
    #[error("invalid observation for `{key}`: {reason}")]
    InvalidObservation { key: PropertyKey, reason: String },
    #[error("persona {persona} cannot write into a model owned by {model}")]
    RobotMismatch { persona: RobotId, model: RobotId },
    #[error("recall runs from the second session on, got session {0}")]
    FirstSession(u32),
    #[error("session index must be positive")]
    ZeroSession,
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("unknown recall mode `{0}`")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// Remembered iff probability is at least the threshold.
    #[default]
    Threshold,
    /// One seeded Bernoulli draw per record, kept for good.
    Stochastic,
}

impl RecallMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RecallMode::Threshold => "threshold",
            RecallMode::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for RecallMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecallMode {
    type Err = RecallError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "threshold" => Ok(RecallMode::Threshold),
            "stochastic" => Ok(RecallMode::Stochastic),
            _ => Err(RecallError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallConfig {
    pub mode: RecallMode,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RecallConfig {
    fn default() -> Self {
        Self {
            mode: RecallMode::Threshold,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
        }
    }
}

impl RecallConfig {
    pub fn threshold() -> Self {
        Self::default()
    }

    pub fn stochastic(seed: u64) -> Self {
        Self {
            mode: RecallMode::Stochastic,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RecallError> {
        if (0.0..=1.0).contains(&self.threshold) {
            Ok(())
        } else {
            Err(RecallError::BadThreshold(self.threshold))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    ExplicitAnswer,
    SideChannel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObservedValue {
    Valence(Valence),
    Interest(InterestLevel),
    Text(String),
}

/// Something the robot learned about the user during a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub key: PropertyKey,
    pub raw_value: ObservedValue,
    pub channel: Channel,
}

impl Observation {
    /// An answer the user gave to an explicit question.
    pub fn answer(key: PropertyKey, text: impl Into<String>) -> Self {
        Self {
            key,
            raw_value: ObservedValue::Text(text.into()),
            channel: Channel::ExplicitAnswer,
        }
    }

    pub fn emotion(valence: Valence) -> Self {
        Self {
            key: PropertyKey::emotion(),
            raw_value: ObservedValue::Valence(valence),
            channel: Channel::SideChannel,
        }
    }

    pub fn attire(aspect: &str, value: impl Into<String>) -> Self {
        Self {
            key: PropertyKey::attire(aspect),
            raw_value: ObservedValue::Text(value.into()),
            channel: Channel::SideChannel,
        }
    }

    /// Checks channel and value type against the key's family and returns
    /// the normalized value plus, for emotion, the observed valence.
    pub fn validate(&self) -> Result<(Value, Option<Valence>), RecallError> {
        let family = self.key.family();
        let invalid = |reason: String| RecallError::InvalidObservation {
            key: self.key.clone(),
            reason,
        };
        let expected_channel = if family.is_implicit() {
            Channel::SideChannel
        } else {
            Channel::ExplicitAnswer
        };
        if self.channel != expected_channel {
            return Err(invalid(format!(
                "arrived via {:?}, expected {:?}",
                self.channel, expected_channel
            )));
        }
        let mem = |e: MemoryError| invalid(e.to_string());
        match (family, &self.raw_value) {
            (PropertyFamily::Emotion, ObservedValue::Valence(v)) => {
                Ok((Value::Valence(*v), Some(*v)))
            }
            (PropertyFamily::Emotion, ObservedValue::Text(t)) => {
                let v: Valence = t.parse().map_err(mem)?;
                Ok((Value::Valence(v), Some(v)))
            }
            (PropertyFamily::Interest, ObservedValue::Interest(level)) => {
                Ok((Value::Interest(*level), None))
            }
            (PropertyFamily::Interest, ObservedValue::Text(t)) => Ok((
                Value::Interest(InterestLevel::parse_answer(t).map_err(mem)?),
                None,
            )),
            (PropertyFamily::Emotion | PropertyFamily::Interest, other) => {
                Err(invalid(format!("{other:?} is the wrong kind of value")))
            }
            (_, ObservedValue::Text(t)) => {
                Ok((Value::Text(normalize_value(t).map_err(mem)?), None))
            }
            (_, other) => Err(invalid(format!("{other:?} is not text"))),
        }
    }
}

/// Which records were remembered and which forgotten at a session start.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecallOutcome {
    pub remembered: BTreeSet<PropertyKey>,
    pub forgotten: BTreeSet<PropertyKey>,
    pub session_index: u32,
}

impl RecallOutcome {
    pub fn is_remembered(&self, key: &PropertyKey) -> bool {
        self.remembered.contains(key)
    }

    pub fn is_forgotten(&self, key: &PropertyKey) -> bool {
        self.forgotten.contains(key)
    }
}

fn build_record(
    persona: &PersonaProfile,
    observation: &Observation,
    session_index: u32,
) -> Result<MemoryRecord, RecallError> {
    let (value, observed_valence) = observation.validate()?;
    let robot = persona.robot_id;
    let key = match (observation.key.family(), observation.key.param(), &value) {
        (family, Some(category), Value::Text(v)) if family.is_favourite() => {
            classify_favourite(persona, category, v)
        }
        _ => observation.key.clone(),
    };
    let probability = get_probability(robot, &key, observed_valence).map_err(|e| {
        RecallError::InvalidObservation {
            key: key.clone(),
            reason: e.to_string(),
        }
    })?;
    let value = match value {
        Value::Valence(v) => Value::Valence(perceive_valence(robot, v)),
        other => other,
    };
    Ok(MemoryRecord {
        key,
        value,
        probability,
        status: RecallStatus::Stored,
        observed_valence,
        session_observed: session_index,
    })
}

fn store_record(model: &mut UserModel, record: MemoryRecord) {
    // A category is either shared or not; drop the stale twin.
    if let Some(category) = record.key.param() {
        let twin = match record.key.family() {
            PropertyFamily::Favourite => Some(PropertyKey::shared_favourite(category)),
            PropertyFamily::SharedFavourite => Some(PropertyKey::favourite(category)),
            _ => None,
        };
        if let Some(twin) = twin {
            model.records.remove(&twin);
        }
    }
    model.insert(record);
}

fn check_owner(model: &UserModel, persona: &PersonaProfile) -> Result<(), RecallError> {
    if model.robot != persona.robot_id {
        return Err(RecallError::RobotMismatch {
            persona: persona.robot_id,
            model: model.robot,
        });
    }
    Ok(())
}

/// Stores every observation of a session as a fresh record.
///
/// All observations are validated before the model is touched, so an error
/// leaves the input model unchanged. Later observations of the same key win.
pub fn populate(
    model: &UserModel,
    persona: &PersonaProfile,
    observations: &[Observation],
    session_index: u32,
) -> Result<UserModel, RecallError> {
    check_owner(model, persona)?;
    if session_index == 0 {
        return Err(RecallError::ZeroSession);
    }
    let records = observations
        .iter()
        .map(|o| build_record(persona, o, session_index))
        .collect::<Result<Vec<_>, _>>()?;
    let mut next = model.clone();
    for record in records {
        store_record(&mut next, record);
    }
    Ok(next)
}

/// Replaces whatever is stored under the observation's key with a fresh,
/// not yet evaluated record.
pub fn reacquire(
    model: &UserModel,
    persona: &PersonaProfile,
    observation: &Observation,
    session_index: u32,
) -> Result<UserModel, RecallError> {
    populate(
        model,
        persona,
        std::slice::from_ref(observation),
        session_index,
    )
}

/// Decides which records are available in session `session_index`.
pub fn recall(
    model: &UserModel,
    config: &RecallConfig,
    session_index: u32,
) -> Result<(UserModel, RecallOutcome), RecallError> {
    config.validate()?;
    if session_index < 2 {
        return Err(RecallError::FirstSession(session_index));
    }
    let mut next = model.clone();
    let mut outcome = RecallOutcome {
        session_index,
        ..Default::default()
    };
    for record in next.records.values_mut() {
        let remembered = match config.mode {
            RecallMode::Threshold => record.probability >= config.threshold,
            RecallMode::Stochastic => match record.status {
                RecallStatus::Remembered => true,
                RecallStatus::Forgotten => false,
                RecallStatus::Stored => {
                    let mut rng = record_stream(config.seed, &model.user_id, model.robot, record);
                    rng.random_bool(record.probability)
                }
            },
        };
        record.status = if remembered {
            outcome.remembered.insert(record.key.clone());
            RecallStatus::Remembered
        } else {
            outcome.forgotten.insert(record.key.clone());
            RecallStatus::Forgotten
        };
    }
    Ok((next, outcome))
}

/// Independent random stream for one record.
///
/// The session the record was observed in is part of the derivation so that
/// re-acquiring a forgotten value gets a fresh draw.
fn record_stream(seed: u64, user_id: &str, robot: RobotId, record: &MemoryRecord) -> ChaCha8Rng {
    let key = record.key.to_string();
    let mut hasher = Sha256::new();
    hasher.update(b"robomem.recall.v1");
    hasher.update(seed.to_le_bytes());
    for part in [user_id, robot.as_str(), key.as_str()] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.update(record.session_observed.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
