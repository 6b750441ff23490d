use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{RecommendReason, Recommendation};
use crate::memory::{normalize_value, MemoryError, PropertyKey, Valence};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActError {
    #[error("{kind} is missing slot `{role}`")]
    MissingSlot { kind: ActKind, role: &'static str },
    #[error("{kind} does not take slot `{role}`")]
    UnexpectedSlot { kind: ActKind, role: String },
    #[error("slot `{role}` of {kind} is invalid: {reason}")]
    BadSlot {
        kind: ActKind,
        role: &'static str,
        reason: String,
    },
}

/// Kinds of robot conversational behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActKind {
    GreetWithName,
    GreetAnonymous,
    ReAsk,
    AskSlot,
    AskMotivation,
    AskDetail,
    SelfDisclose,
    CommentAttire,
    ReferenceEmotion,
    Recommend,
    SharedFavouriteCallout,
    RecallPersonal,
    Acknowledge,
    Farewell,
}

impl ActKind {
    pub const ALL: [ActKind; 14] = [
        ActKind::GreetWithName,
        ActKind::GreetAnonymous,
        ActKind::ReAsk,
        ActKind::AskSlot,
        ActKind::AskMotivation,
        ActKind::AskDetail,
        ActKind::SelfDisclose,
        ActKind::CommentAttire,
        ActKind::ReferenceEmotion,
        ActKind::Recommend,
        ActKind::SharedFavouriteCallout,
        ActKind::RecallPersonal,
        ActKind::Acknowledge,
        ActKind::Farewell,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActKind::GreetWithName => "GreetWithName",
            ActKind::GreetAnonymous => "GreetAnonymous",
            ActKind::ReAsk => "ReAsk",
            ActKind::AskSlot => "AskSlot",
            ActKind::AskMotivation => "AskMotivation",
            ActKind::AskDetail => "AskDetail",
            ActKind::SelfDisclose => "SelfDisclose",
            ActKind::CommentAttire => "CommentAttire",
            ActKind::ReferenceEmotion => "ReferenceEmotion",
            ActKind::Recommend => "Recommend",
            ActKind::SharedFavouriteCallout => "SharedFavouriteCallout",
            ActKind::RecallPersonal => "RecallPersonal",
            ActKind::Acknowledge => "Acknowledge",
            ActKind::Farewell => "Farewell",
        }
    }

    /// (required, optional) slot roles.
    pub fn roles(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            ActKind::GreetWithName => (&["name"], &[]),
            ActKind::GreetAnonymous => (&["robot", "motto"], &[]),
            ActKind::ReAsk => (&["key", "hedged"], &[]),
            ActKind::AskSlot => (&["key"], &[]),
            ActKind::AskMotivation => (&["key", "value"], &[]),
            ActKind::AskDetail => (&["key", "about"], &[]),
            ActKind::SelfDisclose => (&["about"], &["value"]),
            ActKind::CommentAttire => (&["aspect", "value"], &[]),
            ActKind::ReferenceEmotion => (&["valence"], &[]),
            ActKind::Recommend => (
                &["film", "reason", "basis"],
                &["director", "genre", "favourite_film", "actor"],
            ),
            ActKind::SharedFavouriteCallout => (&["category", "value"], &[]),
            ActKind::RecallPersonal => (&["param", "value"], &[]),
            ActKind::Acknowledge => (&["key", "value"], &[]),
            ActKind::Farewell => (&[], &["name"]),
        }
    }

    /// Whether the robot stops after this act to hear an answer that fills
    /// a slot of the user model.
    pub fn asks_for_slot(self) -> bool {
        matches!(self, ActKind::AskSlot | ActKind::AskDetail | ActKind::ReAsk)
    }

    /// Whether the robot hands the floor back to the user after this act.
    pub fn yields_turn(self) -> bool {
        self.asks_for_slot()
            || matches!(
                self,
                ActKind::AskMotivation
                    | ActKind::GreetWithName
                    | ActKind::Recommend
                    | ActKind::SharedFavouriteCallout
            )
    }
}

impl fmt::Display for ActKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed, slot-bearing unit of robot behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAct", into = "RawAct")]
pub struct DialogueAct {
    kind: ActKind,
    slots: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RawAct {
    kind: ActKind,
    #[serde(default)]
    slots: BTreeMap<String, String>,
}

impl TryFrom<RawAct> for DialogueAct {
    type Error = ActError;

    fn try_from(raw: RawAct) -> Result<Self, Self::Error> {
        DialogueAct::new(raw.kind, raw.slots)
    }
}

impl From<DialogueAct> for RawAct {
    fn from(act: DialogueAct) -> Self {
        RawAct {
            kind: act.kind,
            slots: act.slots,
        }
    }
}

fn slots<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl DialogueAct {
    /// Builds an act after checking its slot roles against the kind.
    pub fn new(kind: ActKind, slots: BTreeMap<String, String>) -> Result<Self, ActError> {
        let (required, optional) = kind.roles();
        for role in required {
            if !slots.contains_key(*role) {
                return Err(ActError::MissingSlot { kind, role });
            }
        }
        for role in slots.keys() {
            if !required.contains(&role.as_str()) && !optional.contains(&role.as_str()) {
                return Err(ActError::UnexpectedSlot {
                    kind,
                    role: role.clone(),
                });
            }
        }
        let act = Self { kind, slots };
        for role in ["key", "about"] {
            if let Some(text) = act.slot(role) {
                text.parse::<PropertyKey>()
                    .map_err(|e: MemoryError| ActError::BadSlot {
                        kind,
                        role,
                        reason: e.to_string(),
                    })?;
            }
        }
        if let Some(v) = act.slot("valence") {
            v.parse::<Valence>().map_err(|e| ActError::BadSlot {
                kind,
                role: "valence",
                reason: e.to_string(),
            })?;
        }
        if let Some(h) = act.slot("hedged") {
            if h != "true" && h != "false" {
                return Err(ActError::BadSlot {
                    kind,
                    role: "hedged",
                    reason: format!("expected true or false, got {h:?}"),
                });
            }
        }
        Ok(act)
    }

    fn build<const N: usize>(kind: ActKind, pairs: [(&str, String); N]) -> Self {
        Self::new(kind, slots(pairs)).expect("constructor respects slot roles")
    }

    pub fn greet_with_name(name: &str) -> Self {
        Self::build(ActKind::GreetWithName, [("name", name.to_string())])
    }

    pub fn greet_anonymous(robot: &str, motto: &str) -> Self {
        Self::build(
            ActKind::GreetAnonymous,
            [("robot", robot.to_string()), ("motto", motto.to_string())],
        )
    }

    pub fn ask_slot(key: &PropertyKey) -> Self {
        Self::build(ActKind::AskSlot, [("key", key.to_string())])
    }

    pub fn ask_detail(key: &PropertyKey, about: &PropertyKey) -> Self {
        Self::build(
            ActKind::AskDetail,
            [("key", key.to_string()), ("about", about.to_string())],
        )
    }

    pub fn re_ask(key: &PropertyKey, hedged: bool) -> Self {
        Self::build(
            ActKind::ReAsk,
            [("key", key.to_string()), ("hedged", hedged.to_string())],
        )
    }

    pub fn ask_motivation(key: &PropertyKey, value: &str) -> Self {
        Self::build(
            ActKind::AskMotivation,
            [("key", key.to_string()), ("value", value.to_string())],
        )
    }

    pub fn self_disclose(about: &PropertyKey, own_preference: Option<&str>) -> Self {
        let mut s = slots([("about", about.to_string())]);
        if let Some(v) = own_preference {
            s.insert("value".into(), v.to_string());
        }
        Self::new(ActKind::SelfDisclose, s).expect("constructor respects slot roles")
    }

    pub fn comment_attire(aspect: &str, value: &str) -> Self {
        Self::build(
            ActKind::CommentAttire,
            [("aspect", aspect.to_string()), ("value", value.to_string())],
        )
    }

    pub fn reference_emotion(valence: Valence) -> Self {
        Self::build(
            ActKind::ReferenceEmotion,
            [("valence", valence.to_string())],
        )
    }

    /// `basis` lists the model keys whose values the recommendation draws on.
    pub fn recommend(rec: &Recommendation, basis: &BTreeSet<PropertyKey>) -> Self {
        let basis = basis
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let mut s = slots([
            ("film", rec.film.clone()),
            ("reason", rec.reason.as_str().to_string()),
            ("basis", basis),
        ]);
        match &rec.reason {
            RecommendReason::GenreMatch {
                director,
                genre,
                favourite_film,
            } => {
                s.insert("director".into(), director.clone());
                s.insert("genre".into(), genre.clone());
                s.insert("favourite_film".into(), favourite_film.clone());
            }
            RecommendReason::SameDirector { director } => {
                s.insert("director".into(), director.clone());
            }
            RecommendReason::UpcomingWithActor { actor } => {
                s.insert("actor".into(), actor.clone());
            }
        }
        Self::new(ActKind::Recommend, s).expect("constructor respects slot roles")
    }

    pub fn shared_favourite_callout(category: &str, value: &str) -> Self {
        Self::build(
            ActKind::SharedFavouriteCallout,
            [
                ("category", category.to_string()),
                ("value", value.to_string()),
            ],
        )
    }

    pub fn recall_personal(param: &str, value: &str) -> Self {
        Self::build(
            ActKind::RecallPersonal,
            [("param", param.to_string()), ("value", value.to_string())],
        )
    }

    pub fn acknowledge(key: &PropertyKey, value: &str) -> Self {
        Self::build(
            ActKind::Acknowledge,
            [("key", key.to_string()), ("value", value.to_string())],
        )
    }

    pub fn farewell(name: Option<&str>) -> Self {
        let s = name
            .map(|n| slots([("name", n.to_string())]))
            .unwrap_or_default();
        Self::new(ActKind::Farewell, s).expect("constructor respects slot roles")
    }

    pub fn kind(&self) -> ActKind {
        self.kind
    }

    pub fn slots(&self) -> &BTreeMap<String, String> {
        &self.slots
    }

    pub fn slot(&self, role: &str) -> Option<&str> {
        self.slots.get(role).map(String::as_str)
    }

    /// The property key the act asks about, for the asking kinds.
    pub fn key(&self) -> Option<PropertyKey> {
        self.slot("key").and_then(|k| k.parse().ok())
    }

    pub fn is_hedged(&self) -> bool {
        self.slot("hedged") == Some("true")
    }

    /// Keys of the user model whose stored values this act utters.
    pub fn grounding(&self) -> BTreeSet<PropertyKey> {
        let one = |k: PropertyKey| BTreeSet::from([k]);
        match self.kind {
            ActKind::GreetWithName => one(PropertyKey::username()),
            ActKind::RecallPersonal => one(PropertyKey::personal(&self.slots["param"])),
            ActKind::CommentAttire => one(PropertyKey::attire(&self.slots["aspect"])),
            ActKind::ReferenceEmotion => one(PropertyKey::emotion()),
            ActKind::SharedFavouriteCallout => {
                one(PropertyKey::shared_favourite(&self.slots["category"]))
            }
            ActKind::Recommend => self.slots["basis"]
                .split(',')
                .filter(|s| !s.is_empty())
                .filter_map(|s| s.parse().ok())
                .collect(),
            ActKind::Farewell if self.slots.contains_key("name") => one(PropertyKey::username()),
            _ => BTreeSet::new(),
        }
    }

    /// Template selectors from most to least specific.
    pub fn selectors(&self) -> Vec<String> {
        let mut base: Vec<String> = match self.kind {
            ActKind::ReAsk
            | ActKind::AskSlot
            | ActKind::AskDetail
            | ActKind::AskMotivation
            | ActKind::Acknowledge => self
                .key()
                .map(|k| vec![k.to_string(), k.family().to_string()])
                .unwrap_or_default(),
            ActKind::SelfDisclose => self
                .slot("about")
                .and_then(|k| k.parse::<PropertyKey>().ok())
                .map(|k| vec![k.to_string(), k.family().to_string()])
                .unwrap_or_default(),
            ActKind::Recommend => vec![self.slots["reason"].clone()],
            ActKind::CommentAttire => vec![self.slots["aspect"].clone()],
            ActKind::ReferenceEmotion => vec![self.slots["valence"].clone()],
            ActKind::RecallPersonal => vec![self.slots["param"].clone()],
            ActKind::SharedFavouriteCallout => vec![self.slots["category"].clone()],
            ActKind::Farewell if self.slots.contains_key("name") => vec!["named".into()],
            _ => Vec::new(),
        };
        base.push("default".into());
        if self.is_hedged() {
            base.iter()
                .flat_map(|s| [format!("{s}/hedged"), s.clone()])
                .collect()
        } else {
            base
        }
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        let primary = match self.kind {
            ActKind::Recommend => self.slot("film"),
            ActKind::RecallPersonal => self.slot("param"),
            ActKind::ReferenceEmotion => self.slot("valence"),
            ActKind::CommentAttire => self.slot("aspect"),
            ActKind::SharedFavouriteCallout => self.slot("category"),
            _ => self.slot("key"),
        };
        if let Some(value) = primary {
            write!(f, "({value})")?;
        }
        Ok(())
    }
}

/// Perceived context supplied alongside a user turn.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SideChannel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_valence: Option<Valence>,
    /// Outfit aspects, e.g. `{"color": "blue"}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attire: Option<BTreeMap<String, String>>,
}

impl SideChannel {
    pub fn is_empty(&self) -> bool {
        self.emotion_valence.is_none() && self.attire.as_ref().is_none_or(|a| a.is_empty())
    }

    /// Normalizes attire aspects and values; both must be non-empty.
    pub fn normalized(&self) -> Result<SideChannel, MemoryError> {
        let attire = match &self.attire {
            Some(map) => {
                let mut out = BTreeMap::new();
                for (aspect, value) in map {
                    out.insert(normalize_value(aspect)?, normalize_value(value)?);
                }
                Some(out)
            }
            None => None,
        };
        Ok(SideChannel {
            emotion_valence: self.emotion_valence,
            attire,
        })
    }
}
