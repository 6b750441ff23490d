//! Per-persona text templates for dialogue acts.
//!
//! A pack maps each act kind either to one template or to a table of
//! templates keyed by selector (see [`DialogueAct::selectors`]); a table must
//! contain a `default` entry. Placeholders are `{role}` or `{role|title}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::act::{ActKind, DialogueAct};
use crate::persona::RobotId;

const BUILTIN_PACKS: [&str; 3] = [
    include_str!("../../data/templates/robotech.json"),
    include_str!("../../data/templates/sunnybot.json"),
    include_str!("../../data/templates/mindstorm.json"),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{robot} has no template for {kind}")]
    MissingTemplate { robot: RobotId, kind: ActKind },
    #[error("{robot} {kind}/{selector}: {reason}")]
    BadTemplate {
        robot: RobotId,
        kind: ActKind,
        selector: String,
        reason: String,
    },
    #[error("template pack for {0} is defined twice")]
    DuplicatePack(RobotId),
    #[error("no template pack for {0}")]
    MissingPack(RobotId),
    #[error("act {act} has no value for placeholder `{role}`")]
    MissingValue { act: String, role: String },
    #[error("malformed template pack: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read template pack: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TemplateEntry {
    One(String),
    Many(BTreeMap<String, String>),
}

#[derive(Debug, Deserialize)]
struct RawPack {
    robot: RobotId,
    templates: BTreeMap<ActKind, TemplateEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot { role: String, title: bool },
}

fn parse_template(text: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Literal(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .map(|c| c + open)
            .ok_or_else(|| format!("unclosed placeholder in {text:?}"))?;
        let inner = &rest[open + 1..close];
        let (role, filter) = match inner.split_once('|') {
            Some((r, f)) => (r, Some(f)),
            None => (inner, None),
        };
        let title = match filter {
            None => false,
            Some("title") => true,
            Some(other) => return Err(format!("unknown filter `{other}`")),
        };
        if role.is_empty() {
            return Err("empty placeholder".into());
        }
        pieces.push(Piece::Slot {
            role: role.to_string(),
            title,
        });
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(format!("stray `}}` in {text:?}"));
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest.to_string()));
    }
    Ok(pieces)
}

const MINOR_WORDS: [&str; 11] = [
    "a", "an", "and", "at", "for", "in", "of", "on", "the", "to", "with",
];

/// Capitalizes each word; minor words stay lowercase except at the start.
fn title_case(s: &str) -> String {
    s.split(' ')
        .enumerate()
        .map(|(i, w)| {
            if i > 0 && MINOR_WORDS.contains(&w) {
                return w.to_string();
            }
            let mut chars = w.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Templates for one persona, validated at load time.
#[derive(Debug, Clone)]
pub struct TemplatePack {
    robot: RobotId,
    templates: BTreeMap<ActKind, BTreeMap<String, Vec<Piece>>>,
}

impl TemplatePack {
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let raw: RawPack = serde_json::from_str(text)?;
        let robot = raw.robot;
        let mut templates = BTreeMap::new();
        for (kind, entry) in raw.templates {
            let table = match entry {
                TemplateEntry::One(t) => BTreeMap::from([("default".to_string(), t)]),
                TemplateEntry::Many(m) => m,
            };
            let (required, optional) = kind.roles();
            let mut parsed = BTreeMap::new();
            for (selector, text) in table {
                let bad = |reason: String| TemplateError::BadTemplate {
                    robot,
                    kind,
                    selector: selector.clone(),
                    reason,
                };
                let pieces = parse_template(&text).map_err(bad)?;
                for piece in &pieces {
                    if let Piece::Slot { role, .. } = piece {
                        if !required.contains(&role.as_str()) && !optional.contains(&role.as_str())
                        {
                            return Err(bad(format!("{kind} has no slot `{role}`")));
                        }
                    }
                }
                parsed.insert(selector, pieces);
            }
            templates.insert(kind, parsed);
        }
        for kind in ActKind::ALL {
            let has_default = templates
                .get(&kind)
                .is_some_and(|t: &BTreeMap<String, Vec<Piece>>| t.contains_key("default"));
            if !has_default {
                return Err(TemplateError::MissingTemplate { robot, kind });
            }
        }
        Ok(Self { robot, templates })
    }

    pub fn robot(&self) -> RobotId {
        self.robot
    }

    pub fn render_act(&self, act: &DialogueAct) -> Result<String, TemplateError> {
        let table = self
            .templates
            .get(&act.kind())
            .ok_or(TemplateError::MissingTemplate {
                robot: self.robot,
                kind: act.kind(),
            })?;
        let pieces = act.selectors().iter().find_map(|s| table.get(s)).ok_or(
            TemplateError::MissingTemplate {
                robot: self.robot,
                kind: act.kind(),
            },
        )?;
        let mut out = String::new();
        for piece in pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot { role, title } => {
                    let value = act.slot(role).ok_or_else(|| TemplateError::MissingValue {
                        act: act.to_string(),
                        role: role.clone(),
                    })?;
                    if *title {
                        out.push_str(&title_case(value));
                    } else {
                        out.push_str(value);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn render(&self, acts: &[DialogueAct]) -> Result<String, TemplateError> {
        let parts = acts
            .iter()
            .map(|a| self.render_act(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(parts.join(" "))
    }
}

/// One template pack per persona.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    packs: [TemplatePack; 3],
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_json_docs(BUILTIN_PACKS).expect("bundled template packs are valid")
    }

    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self, TemplateError> {
        let docs = paths
            .iter()
            .map(std::fs::read_to_string)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_json_docs(docs.iter().map(String::as_str))
    }

    pub fn from_json_docs<'a>(
        docs: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, TemplateError> {
        let mut slots: [Option<TemplatePack>; 3] = [None, None, None];
        for doc in docs {
            let pack = TemplatePack::from_json(doc)?;
            let idx = RobotId::ALL
                .iter()
                .position(|r| *r == pack.robot)
                .unwrap_or(0);
            if slots[idx].is_some() {
                return Err(TemplateError::DuplicatePack(pack.robot));
            }
            slots[idx] = Some(pack);
        }
        let [a, b, c] = slots;
        Ok(Self {
            packs: [
                a.ok_or(TemplateError::MissingPack(RobotId::RoboTech))?,
                b.ok_or(TemplateError::MissingPack(RobotId::SunnyBot))?,
                c.ok_or(TemplateError::MissingPack(RobotId::MindStorm))?,
            ],
        })
    }

    pub fn pack(&self, robot: RobotId) -> &TemplatePack {
        self.packs
            .iter()
            .find(|p| p.robot == robot)
            .expect("one pack per robot")
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Renders acts with the persona's template pack.
pub fn render(
    acts: &[DialogueAct],
    robot: RobotId,
    templates: &TemplateSet,
) -> Result<String, TemplateError> {
    templates.pack(robot).render(acts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{PropertyKey, Valence};

    #[test]
    fn parses_placeholders() {
        assert_eq!(
            parse_template("Hi {name|title}!").unwrap(),
            vec![
                Piece::Literal("Hi ".into()),
                Piece::Slot {
                    role: "name".into(),
                    title: true
                },
                Piece::Literal("!".into()),
            ]
        );
        assert!(parse_template("Hi {name").is_err());
        assert!(parse_template("Hi {name|shout}").is_err());
        assert!(parse_template("Hi }").is_err());
    }

    #[test]
    fn title_case_words() {
        assert_eq!(
            title_case("killers of the flower moon"),
            "Killers of the Flower Moon"
        );
        assert_eq!(
            title_case("the wolf of wall street"),
            "The Wolf of Wall Street"
        );
        assert_eq!(title_case("benedetta"), "Benedetta");
    }

    #[test]
    fn mindstorm_reask_apologises() {
        let set = TemplateSet::builtin();
        let text = render(
            &[DialogueAct::re_ask(&PropertyKey::username(), true)],
            RobotId::MindStorm,
            &set,
        )
        .unwrap();
        let lower = text.to_lowercase();
        assert!(lower.contains("sorry"), "{text}");
        assert!(lower.contains("name"), "{text}");
    }

    #[test]
    fn greeting_uses_capitalised_name() {
        let set = TemplateSet::builtin();
        for robot in RobotId::ALL {
            let text = render(&[DialogueAct::greet_with_name("benedetta")], robot, &set).unwrap();
            assert!(text.contains("Benedetta"), "{robot}: {text}");
        }
    }

    #[test]
    fn every_persona_says_goodbye() {
        let set = TemplateSet::builtin();
        for robot in RobotId::ALL {
            assert!(!render(&[DialogueAct::farewell(None)], robot, &set)
                .unwrap()
                .trim()
                .is_empty());
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let set = TemplateSet::builtin();
        let acts = [
            DialogueAct::greet_with_name("ann"),
            DialogueAct::reference_emotion(Valence::Negative),
            DialogueAct::ask_slot(&PropertyKey::favourite("film")),
        ];
        for robot in RobotId::ALL {
            assert_eq!(
                render(&acts, robot, &set).unwrap(),
                render(&acts, robot, &set).unwrap()
            );
        }
    }

    #[test]
    fn missing_kind_fails_at_load() {
        let doc = r#"{"robot":"RoboTech","templates":{"Farewell":"Bye."}}"#;
        assert!(matches!(
            TemplatePack::from_json(doc),
            Err(TemplateError::MissingTemplate { .. })
        ));
    }

    #[test]
    fn unknown_placeholder_fails_at_load() {
        let mut doc: serde_json::Value = serde_json::from_str(BUILTIN_PACKS[0]).unwrap();
        doc["templates"]["Farewell"] = serde_json::json!("Bye {film}.");
        assert!(matches!(
            TemplatePack::from_json(&doc.to_string()),
            Err(TemplateError::BadTemplate { .. })
        ));
    }

    #[test]
    fn table_without_default_fails_at_load() {
        let mut doc: serde_json::Value = serde_json::from_str(BUILTIN_PACKS[1]).unwrap();
        doc["templates"]["ReferenceEmotion"] = serde_json::json!({"positive": "Yay."});
        assert!(matches!(
            TemplatePack::from_json(&doc.to_string()),
            Err(TemplateError::MissingTemplate { .. })
        ));
    }

    #[test]
    fn pack_set_needs_all_personas() {
        assert!(matches!(
            TemplateSet::from_json_docs(BUILTIN_PACKS[..2].iter().copied()),
            Err(TemplateError::MissingPack(RobotId::MindStorm))
        ));
        assert!(matches!(
            TemplateSet::from_json_docs([BUILTIN_PACKS[0], BUILTIN_PACKS[0]]),
            Err(TemplateError::DuplicatePack(RobotId::RoboTech))
        ));
    }
}
