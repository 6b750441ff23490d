//! The user model: property keys, values, and how likely each robot is to
//! remember them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::{PersonaProfile, RobotId};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("value is empty after normalization")]
    EmptyValue,
    #[error("unknown property family `{0}`")]
    UnknownFamily(String),
    #[error("property `{0}` requires a parameter")]
    MissingParam(PropertyFamily),
    #[error("property `{0}` does not take a parameter")]
    UnexpectedParam(PropertyFamily),
    #[error("malformed property key `{0}`")]
    MalformedKey(String),
    #[error("emotion probability needs the observed valence")]
    MissingValence,
    #[error("property `{0}` does not take a valence")]
    SpuriousValence(PropertyKey),
    #[error("value {value:?} does not fit property `{key}`")]
    ValueMismatch { key: PropertyKey, value: String },
    #[error("unknown valence `{0}`")]
    UnknownValence(String),
    #[error("unknown interest level `{0}`")]
    UnknownInterest(String),
}

/// Trims, lowercases and collapses internal whitespace.
pub fn normalize_value(raw: &str) -> Result<String, MemoryError> {
    let folded = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    if folded.is_empty() {
        Err(MemoryError::EmptyValue)
    } else {
        Ok(folded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyFamily {
    Username,
    Personal,
    Topic,
    Interest,
    Favourite,
    SharedFavourite,
    Emotion,
    Attire,
}

impl PropertyFamily {
    pub const ALL: [PropertyFamily; 8] = [
        PropertyFamily::Username,
        PropertyFamily::Personal,
        PropertyFamily::Topic,
        PropertyFamily::Interest,
        PropertyFamily::Favourite,
        PropertyFamily::SharedFavourite,
        PropertyFamily::Emotion,
        PropertyFamily::Attire,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyFamily::Username => "username",
            PropertyFamily::Personal => "personal",
            PropertyFamily::Topic => "topic",
            PropertyFamily::Interest => "interest",
            PropertyFamily::Favourite => "favourite",
            PropertyFamily::SharedFavourite => "shared_favourite",
            PropertyFamily::Emotion => "emotion",
            PropertyFamily::Attire => "attire",
        }
    }

    pub fn takes_param(self) -> bool {
        matches!(
            self,
            PropertyFamily::Personal
                | PropertyFamily::Interest
                | PropertyFamily::Favourite
                | PropertyFamily::SharedFavourite
                | PropertyFamily::Attire
        )
    }

    /// Emotion and attire are perceived, everything else is asked for.
    pub fn is_implicit(self) -> bool {
        matches!(self, PropertyFamily::Emotion | PropertyFamily::Attire)
    }

    pub fn is_favourite(self) -> bool {
        matches!(
            self,
            PropertyFamily::Favourite | PropertyFamily::SharedFavourite
        )
    }
}

impl fmt::Display for PropertyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyFamily {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| MemoryError::UnknownFamily(s.to_string()))
    }
}

/// A property of the user model, e.g. `username` or `personal(profession)`.
///
/// The parameter is present exactly for the parameterized families and is
/// always a normalized token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawKey", into = "RawKey")]
pub struct PropertyKey {
    family: PropertyFamily,
    param: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawKey {
    family: PropertyFamily,
    param: Option<String>,
}

impl TryFrom<RawKey> for PropertyKey {
    type Error = MemoryError;

    fn try_from(raw: RawKey) -> Result<Self, Self::Error> {
        PropertyKey::new(raw.family, raw.param.as_deref())
    }
}

impl From<PropertyKey> for RawKey {
    fn from(key: PropertyKey) -> Self {
        RawKey {
            family: key.family,
            param: key.param,
        }
    }
}

impl PropertyKey {
    pub fn new(family: PropertyFamily, param: Option<&str>) -> Result<Self, MemoryError> {
        let param = match (family.takes_param(), param) {
            (true, Some(p)) => Some(normalize_value(p)?),
            (true, None) => return Err(MemoryError::MissingParam(family)),
            (false, None) => None,
            (false, Some(_)) => return Err(MemoryError::UnexpectedParam(family)),
        };
        Ok(Self { family, param })
    }

    fn with_param(family: PropertyFamily, param: &str) -> Self {
        Self::new(family, Some(param)).expect("non-empty parameter")
    }

    pub fn username() -> Self {
        Self {
            family: PropertyFamily::Username,
            param: None,
        }
    }

    pub fn topic() -> Self {
        Self {
            family: PropertyFamily::Topic,
            param: None,
        }
    }

    pub fn emotion() -> Self {
        Self {
            family: PropertyFamily::Emotion,
            param: None,
        }
    }

    pub fn personal(param: &str) -> Self {
        Self::with_param(PropertyFamily::Personal, param)
    }

    pub fn interest(topic: &str) -> Self {
        Self::with_param(PropertyFamily::Interest, topic)
    }

    pub fn favourite(category: &str) -> Self {
        Self::with_param(PropertyFamily::Favourite, category)
    }

    pub fn shared_favourite(category: &str) -> Self {
        Self::with_param(PropertyFamily::SharedFavourite, category)
    }

    pub fn attire(aspect: &str) -> Self {
        Self::with_param(PropertyFamily::Attire, aspect)
    }

    pub fn family(&self) -> PropertyFamily {
        self.family
    }

    pub fn param(&self) -> Option<&str> {
        self.param.as_deref()
    }
}

impl fmt::Display for PropertyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.param {
            Some(p) => write!(f, "{}({})", self.family, p),
            None => write!(f, "{}", self.family),
        }
    }
}

impl FromStr for PropertyKey {
    type Err = MemoryError;

    /// Parses the display form, `family` or `family(param)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('(') {
            Some((family, rest)) => {
                let param = rest
                    .strip_suffix(')')
                    .ok_or_else(|| MemoryError::MalformedKey(s.to_string()))?;
                PropertyKey::new(family.trim().parse()?, Some(param))
            }
            None => PropertyKey::new(s.parse()?, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Positive,
    Neutral,
    Negative,
}

impl Valence {
    pub const ALL: [Valence; 3] = [Valence::Positive, Valence::Neutral, Valence::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Valence::Positive => "positive",
            Valence::Neutral => "neutral",
            Valence::Negative => "negative",
        }
    }
}

impl fmt::Display for Valence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Valence {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Valence::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MemoryError::UnknownValence(s.to_string()))
    }
}

/// Ordinal level of interest in a topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterestLevel {
    Low,
    Medium,
    High,
}

impl InterestLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            InterestLevel::Low => "low",
            InterestLevel::Medium => "medium",
            InterestLevel::High => "high",
        }
    }

    /// Accepts the level names plus a few everyday phrasings.
    pub fn parse_answer(answer: &str) -> Result<Self, MemoryError> {
        let norm = normalize_value(answer)?;
        let norm = norm.trim_end_matches(['.', '!']);
        match norm {
            "low" | "a little" | "not much" | "not really" => Ok(InterestLevel::Low),
            "medium" | "some" | "moderate" | "moderately" | "so so" => Ok(InterestLevel::Medium),
            "high" | "a lot" | "very" | "very much" | "really" => Ok(InterestLevel::High),
            _ => Err(MemoryError::UnknownInterest(answer.to_string())),
        }
    }
}

impl fmt::Display for InterestLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A stored piece of knowledge about the user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Interest(InterestLevel),
    Valence(Valence),
    Text(String),
}

impl Value {
    pub fn fits(&self, family: PropertyFamily) -> bool {
        match self {
            Value::Interest(_) => family == PropertyFamily::Interest,
            Value::Valence(_) => family == PropertyFamily::Emotion,
            Value::Text(t) => {
                !t.is_empty()
                    && !matches!(family, PropertyFamily::Interest | PropertyFamily::Emotion)
            }
        }
    }

    /// Reads a value in the textual form used for `family`.
    pub fn parse_for(family: PropertyFamily, text: &str) -> Result<Self, MemoryError> {
        match family {
            PropertyFamily::Interest => Ok(Value::Interest(InterestLevel::parse_answer(text)?)),
            PropertyFamily::Emotion => Ok(Value::Valence(text.parse()?)),
            _ => Ok(Value::Text(normalize_value(text)?)),
        }
    }

    pub fn as_text(&self) -> &str {
        match self {
            Value::Interest(i) => i.as_str(),
            Value::Valence(v) => v.as_str(),
            Value::Text(t) => t,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_text())
    }
}

/// Probability that `robot` can later remember the value stored under `key`.
///
/// Parameterized families share one probability regardless of parameter.
/// Emotion is keyed on the valence the user actually showed, which must be
/// supplied for emotion and only for emotion.
pub fn get_probability(
    robot: RobotId,
    key: &PropertyKey,
    observed_valence: Option<Valence>,
) -> Result<f64, MemoryError> {
    use PropertyFamily as F;
    use RobotId::*;

    let family = key.family();
    if family != F::Emotion && observed_valence.is_some() {
        return Err(MemoryError::SpuriousValence(key.clone()));
    }
    let p = match (family, robot) {
        (F::Username, RoboTech) => 1.0,
        (F::Username, SunnyBot) => 0.8,
        (F::Username, MindStorm) => 0.3,

        (F::Personal, RoboTech) => 0.9,
        (F::Personal, SunnyBot) => 0.4,
        (F::Personal, MindStorm) => 0.4,

        (F::Topic, RoboTech) => 1.0,
        (F::Topic, SunnyBot) => 1.0,
        (F::Topic, MindStorm) => 0.5,

        (F::Interest, RoboTech) => 1.0,
        (F::Interest, SunnyBot) => 0.9,
        (F::Interest, MindStorm) => 0.4,

        (F::Favourite, RoboTech) => 0.9,
        (F::Favourite, SunnyBot) => 0.6,
        (F::Favourite, MindStorm) => 0.2,

        (F::SharedFavourite, RoboTech) => 0.9,
        (F::SharedFavourite, SunnyBot) => 0.9,
        (F::SharedFavourite, MindStorm) => 0.2,

        (F::Attire, RoboTech) => 0.3,
        (F::Attire, SunnyBot) => 0.7,
        (F::Attire, MindStorm) => 0.1,

        (F::Emotion, _) => {
            let valence = observed_valence.ok_or(MemoryError::MissingValence)?;
            match (robot, valence) {
                // No valence split for the conscientious robot.
                (RoboTech, _) => 0.1,
                (SunnyBot, Valence::Positive) => 1.0,
                (SunnyBot, Valence::Neutral) => 1.0,
                (SunnyBot, Valence::Negative) => 0.5,
                (MindStorm, Valence::Positive) => 0.2,
                (MindStorm, Valence::Neutral) => 1.0,
                (MindStorm, Valence::Negative) => 1.0,
            }
        }
    };
    Ok(p)
}

/// The valence a robot stores after perceiving `observed`.
///
/// SunnyBot reads neutral faces as positive and MindStorm as negative.
pub fn perceive_valence(robot: RobotId, observed: Valence) -> Valence {
    match (robot, observed) {
        (RobotId::SunnyBot, Valence::Neutral) => Valence::Positive,
        (RobotId::MindStorm, Valence::Neutral) => Valence::Negative,
        (_, v) => v,
    }
}

/// Chooses between `favourite(category)` and `shared_favourite(category)`
/// depending on whether the persona shares the user's taste.
///
/// Both arguments are expected to be normalized already.
pub fn classify_favourite(
    persona: &PersonaProfile,
    category: &str,
    user_value: &str,
) -> PropertyKey {
    if persona.prefers(category, user_value) {
        PropertyKey::shared_favourite(category)
    } else {
        PropertyKey::favourite(category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallStatus {
    Stored,
    Remembered,
    Forgotten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRecord {
    pub key: PropertyKey,
    pub value: Value,
    pub probability: f64,
    pub status: RecallStatus,
    /// What the user actually showed; emotion records only.
    pub observed_valence: Option<Valence>,
    pub session_observed: u32,
}

impl MemoryRecord {
    /// Checks the record's internal invariants for `robot`.
    pub fn check(&self, robot: RobotId) -> Result<(), String> {
        let family = self.key.family();
        if !self.value.fits(family) {
            return Err(format!(
                "value {:?} does not fit `{}`",
                self.value, self.key
            ));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(format!(
                "probability {} of `{}` is outside [0, 1]",
                self.probability, self.key
            ));
        }
        if (family == PropertyFamily::Emotion) != self.observed_valence.is_some() {
            return Err(format!("observed valence mismatch on `{}`", self.key));
        }
        if let (Some(observed), Value::Valence(stored)) = (self.observed_valence, &self.value) {
            if perceive_valence(robot, observed) != *stored {
                return Err(format!(
                    "stored valence {stored} is not what {robot} perceives from {observed}"
                ));
            }
        }
        let expected =
            get_probability(robot, &self.key, self.observed_valence).map_err(|e| e.to_string())?;
        if expected != self.probability {
            return Err(format!(
                "probability {} of `{}` differs from {robot}'s {}",
                self.probability, self.key, expected
            ));
        }
        if self.session_observed == 0 {
            return Err(format!("`{}` has session index 0", self.key));
        }
        Ok(())
    }
}

/// Everything one robot has stored about one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    pub schema_version: u32,
    pub user_id: String,
    pub robot: RobotId,
    /// Number of sessions that ran to completion with this robot.
    pub completed_sessions: u32,
    pub records: BTreeMap<PropertyKey, MemoryRecord>,
}

impl UserModel {
    pub fn new(user_id: impl Into<String>, robot: RobotId) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            user_id: user_id.into(),
            robot,
            completed_sessions: 0,
            records: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &PropertyKey) -> Option<&MemoryRecord> {
        self.records.get(key)
    }

    pub fn insert(&mut self, record: MemoryRecord) {
        self.records.insert(record.key.clone(), record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.values()
    }

    /// Records of one family, in key order.
    pub fn family(&self, family: PropertyFamily) -> impl Iterator<Item = &MemoryRecord> {
        self.records
            .values()
            .filter(move |r| r.key.family() == family)
    }
}
