//! Robot personas described with Big Five trait weights.
//!
//! The three built-in personas ship as a bundled JSON document
//! (`data/personas.json`). A replacement document may be loaded from disk,
//! but it must still define exactly one profile for each robot identifier.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::normalize_value;

const BUILTIN_PERSONAS: &str = include_str!("../data/personas.json");

/// A trait weight at or above this value counts as a "high" score when
/// deriving dialogue style.
pub const HIGH_TRAIT: f64 = 0.7;

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("unknown robot `{0}`")]
    UnknownRobot(String),
    #[error("trait `{name}` of {robot} is {value}, expected a weight in [0, 1]")]
    TraitOutOfRange {
        robot: RobotId,
        name: &'static str,
        value: f64,
    },
    #[error("persona {0} is defined more than once")]
    Duplicate(RobotId),
    #[error("persona {0} is missing from the personas document")]
    Missing(RobotId),
    #[error("invalid preference for {robot}: {reason}")]
    InvalidPreference { robot: RobotId, reason: String },
    #[error("malformed personas document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read personas document: {0}")]
    Io(#[from] std::io::Error),
}

/// The closed set of robots a user can talk to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RobotId {
    RoboTech,
    SunnyBot,
    MindStorm,
}

impl RobotId {
    pub const ALL: [RobotId; 3] = [RobotId::RoboTech, RobotId::SunnyBot, RobotId::MindStorm];

    pub fn as_str(self) -> &'static str {
        match self {
            RobotId::RoboTech => "RoboTech",
            RobotId::SunnyBot => "SunnyBot",
            RobotId::MindStorm => "MindStorm",
        }
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RobotId {
    type Err = PersonaError;

    /// Accepts the canonical name in any letter case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RobotId::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PersonaError::UnknownRobot(s.to_string()))
    }
}

/// One of the persona's own tastes, e.g. `(genre, "science fiction")`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Preference {
    pub category: String,
    pub value: String,
}

impl Preference {
    pub fn new(category: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            value: value.into(),
        }
    }
}

/// A robot's Big Five trait vector, motto and preference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub robot_id: RobotId,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
    pub conscientiousness: f64,
    pub openness: f64,
    pub motto: String,
    #[serde(default)]
    pub preferences: BTreeSet<Preference>,
}

impl PersonaProfile {
    /// Trait weights in the fixed order E, A, N, C, O.
    pub fn traits(&self) -> [(&'static str, f64); 5] {
        [
            ("extraversion", self.extraversion),
            ("agreeableness", self.agreeableness),
            ("neuroticism", self.neuroticism),
            ("conscientiousness", self.conscientiousness),
            ("openness", self.openness),
        ]
    }

    pub fn prefers(&self, category: &str, value: &str) -> bool {
        self.preferences
            .iter()
            .any(|p| p.category == category && p.value == value)
    }

    /// The persona's own preference for a category, if it has exactly one.
    pub fn preference_for(&self, category: &str) -> Option<&str> {
        self.preferences
            .iter()
            .find(|p| p.category == category)
            .map(|p| p.value.as_str())
    }

    fn validate(&mut self) -> Result<(), PersonaError> {
        for (name, value) in self.traits() {
            if !(0.0..=1.0).contains(&value) {
                return Err(PersonaError::TraitOutOfRange {
                    robot: self.robot_id,
                    name,
                    value,
                });
            }
        }
        let robot = self.robot_id;
        let mut normalized = BTreeSet::new();
        for pref in &self.preferences {
            let category =
                normalize_value(&pref.category).map_err(|e| PersonaError::InvalidPreference {
                    robot,
                    reason: e.to_string(),
                })?;
            let value =
                normalize_value(&pref.value).map_err(|e| PersonaError::InvalidPreference {
                    robot,
                    reason: e.to_string(),
                })?;
            normalized.insert(Preference { category, value });
        }
        self.preferences = normalized;
        Ok(())
    }
}

/// Dialogue style flags derived from a persona's trait weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StyleParams {
    /// High conscientiousness: asks follow-up questions for specifics.
    pub detail_probing: bool,
    /// High openness: asks why the user likes things.
    pub motivation_probing: bool,
    /// High extraversion: talks about itself.
    pub self_disclosure: bool,
    /// High agreeableness: points out tastes it shares with the user.
    pub preference_mirroring: bool,
    /// High neuroticism: apologises and hedges when it has forgotten.
    pub hedged_recall: bool,
}

pub fn style_params(profile: &PersonaProfile) -> StyleParams {
    let high = |w: f64| w >= HIGH_TRAIT;
    StyleParams {
        detail_probing: high(profile.conscientiousness),
        motivation_probing: high(profile.openness),
        self_disclosure: high(profile.extraversion),
        preference_mirroring: high(profile.agreeableness),
        hedged_recall: high(profile.neuroticism),
    }
}

/// Immutable set of persona profiles, one per [`RobotId`].
#[derive(Debug, Clone)]
pub struct PersonaRegistry {
    profiles: [PersonaProfile; 3],
}

impl PersonaRegistry {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PERSONAS).expect("bundled personas document is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersonaError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, PersonaError> {
        let parsed: Vec<PersonaProfile> = serde_json::from_str(text)?;
        let mut slots: [Option<PersonaProfile>; 3] = [None, None, None];
        for mut profile in parsed {
            profile.validate()?;
            let slot = &mut slots[index_of(profile.robot_id)];
            if slot.is_some() {
                return Err(PersonaError::Duplicate(profile.robot_id));
            }
            *slot = Some(profile);
        }
        let [a, b, c] = slots;
        let take = |p: Option<PersonaProfile>, id| p.ok_or(PersonaError::Missing(id));
        Ok(Self {
            profiles: [
                take(a, RobotId::RoboTech)?,
                take(b, RobotId::SunnyBot)?,
                take(c, RobotId::MindStorm)?,
            ],
        })
    }

    pub fn get(&self, robot: RobotId) -> &PersonaProfile {
        &self.profiles[index_of(robot)]
    }

    /// Looks a persona up by its textual identifier.
    pub fn get_persona(&self, robot_id: &str) -> Result<&PersonaProfile, PersonaError> {
        Ok(self.get(robot_id.parse()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonaProfile> {
        self.profiles.iter()
    }
}

impl Default for PersonaRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn index_of(robot: RobotId) -> usize {
    match robot {
        RobotId::RoboTech => 0,
        RobotId::SunnyBot => 1,
        RobotId::MindStorm => 2,
    }
}
