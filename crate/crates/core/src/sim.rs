//! Batch driving without a server: scripted users, Monte-Carlo recall
//! statistics and transcript replay.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{ActKind, DialogueAct, DialogueEngine, EngineError, Phase, SideChannel};
use crate::memory::{
    get_probability, perceive_valence, InterestLevel, MemoryRecord, PropertyFamily, PropertyKey,
    RecallStatus, UserModel, Valence, Value,
};
use crate::persona::RobotId;
use crate::recall::{recall, RecallConfig, RecallError, RecallOutcome};
use crate::store::{validate_user_id, MemoryStore, StoreError};
use crate::transcript::{parse_jsonl, Speaker, TranscriptLine};

const CANONICAL_USER: &str = include_str!("../data/scripts/canonical_user.json");

/// Upper bound on user turns in one simulated session.
pub const MAX_USER_TURNS: u32 = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid user script: {0}")]
    Script(String),
    #[error("malformed transcript at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("session {0} did not finish within {MAX_USER_TURNS} user turns")]
    TurnLimit(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Recall(#[from] RecallError),
    #[error("cannot write statistics: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    user_id: String,
    answers: BTreeMap<String, String>,
    #[serde(default)]
    free_reply: Option<String>,
    #[serde(default)]
    motivation_reply: Option<String>,
    #[serde(default)]
    side_channel: SideChannel,
    #[serde(default)]
    robot_side_channel: BTreeMap<RobotId, SideChannel>,
}

/// A scripted user: one answer per slot, a stock reply for everything
/// else, and side-channel readings sent with the first message of each
/// session.
#[derive(Debug, Clone, PartialEq)]
pub struct UserScript {
    pub user_id: String,
    pub answers: BTreeMap<PropertyKey, String>,
    pub free_reply: String,
    pub motivation_reply: String,
    pub side_channel: SideChannel,
    pub robot_side_channel: BTreeMap<RobotId, SideChannel>,
}

impl UserScript {
    /// The user of the reference dialogues: a student who likes Tenet,
    /// wearing blue, looking neutral (negative to MindStorm).
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_USER).expect("bundled user script is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let raw: RawScript =
            serde_json::from_str(text).map_err(|e| SimError::Script(e.to_string()))?;
        validate_user_id(&raw.user_id).map_err(|e| SimError::Script(e.to_string()))?;
        let answers = raw
            .answers
            .into_iter()
            .map(|(k, v)| {
                k.parse::<PropertyKey>()
                    .map(|k| (k, v))
                    .map_err(|e| SimError::Script(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let check = |s: &SideChannel| {
            s.normalized()
                .map_err(|e| SimError::Script(format!("side channel: {e}")))
        };
        check(&raw.side_channel)?;
        for s in raw.robot_side_channel.values() {
            check(s)?;
        }
        let free_reply = raw.free_reply.unwrap_or_else(|| "ok".to_string());
        Ok(Self {
            user_id: raw.user_id,
            answers,
            motivation_reply: raw.motivation_reply.unwrap_or_else(|| free_reply.clone()),
            free_reply,
            side_channel: raw.side_channel,
            robot_side_channel: raw.robot_side_channel,
        })
    }

    pub fn side_channel_for(&self, robot: RobotId) -> &SideChannel {
        self.robot_side_channel
            .get(&robot)
            .unwrap_or(&self.side_channel)
    }

    /// What the user says after `act`. Unscripted slots get an empty answer.
    pub fn reply_to(&self, act: Option<&DialogueAct>) -> &str {
        match act {
            Some(a) if a.kind().asks_for_slot() => a
                .key()
                .and_then(|k| self.answers.get(&k))
                .map_or("", String::as_str),
            Some(a) if a.kind() == ActKind::AskMotivation => &self.motivation_reply,
            _ => &self.free_reply,
        }
    }
}

/// The result of one simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub session_id: String,
    pub session_index: u32,
    pub outcome: Option<RecallOutcome>,
    /// Every robot act of the session, in order.
    pub acts: Vec<DialogueAct>,
}

impl SessionRun {
    pub fn has(&self, kind: ActKind) -> bool {
        self.acts.iter().any(|a| a.kind() == kind)
    }

    pub fn acts_of(&self, kind: ActKind) -> impl Iterator<Item = &DialogueAct> {
        self.acts.iter().filter(move |a| a.kind() == kind)
    }
}

pub fn session_id(user_id: &str, robot: RobotId, session_index: u32) -> String {
    format!(
        "{user_id}-{}-{session_index}",
        robot.as_str().to_ascii_lowercase()
    )
}

/// Runs one full session of `script` with `robot`.
pub fn run_session(
    engine: &DialogueEngine,
    robot: RobotId,
    script: &UserScript,
    config: RecallConfig,
) -> Result<SessionRun, SimError> {
    let user = &script.user_id;
    let index = engine.store().load(user, robot)?.completed_sessions + 1;
    let id = session_id(user, robot, index);
    let (mut state, opening) = engine.start_session(id.clone(), user, robot, config)?;
    let mut acts = opening.acts;
    let mut user_turns = 0;
    while state.phase() != Phase::Closed {
        if user_turns == MAX_USER_TURNS {
            return Err(SimError::TurnLimit(id));
        }
        let side = if user_turns == 0 {
            script.side_channel_for(robot).clone()
        } else {
            SideChannel::default()
        };
        let text = script.reply_to(state.awaiting()).to_string();
        acts.extend(engine.step(&mut state, &text, &side)?.acts);
        user_turns += 1;
    }
    Ok(SessionRun {
        session_id: id,
        session_index: state.session_index(),
        outcome: state.recall_outcome().cloned(),
        acts,
    })
}

/// Runs `sessions` consecutive sessions and returns them with the final
/// model.
pub fn simulate(
    engine: &DialogueEngine,
    robot: RobotId,
    script: &UserScript,
    sessions: u32,
    config: RecallConfig,
) -> Result<(Vec<SessionRun>, UserModel), SimError> {
    let runs = (0..sessions)
        .map(|_| run_session(engine, robot, script, config))
        .collect::<Result<Vec<_>, _>>()?;
    let model = engine.store().load(&script.user_id, robot)?;
    Ok((runs, model))
}

/// Observed recall frequency of one (robot, family, valence) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub robot: RobotId,
    pub family: PropertyFamily,
    pub valence: Option<Valence>,
    pub expected: f64,
    pub observed: f64,
    pub trials: u32,
}

impl StatsRow {
    /// Cells with probability 0 or 1 must match exactly.
    pub fn within(&self, tolerance: f64) -> bool {
        if self.expected == 0.0 || self.expected == 1.0 {
            self.observed == self.expected
        } else {
            (self.observed - self.expected).abs() <= tolerance
        }
    }
}

fn sample_record(
    robot: RobotId,
    family: PropertyFamily,
    valence: Option<Valence>,
) -> Result<MemoryRecord, SimError> {
    let (key, value) = match family {
        PropertyFamily::Username => (PropertyKey::username(), Value::Text("ann".into())),
        PropertyFamily::Personal => (
            PropertyKey::personal("profession"),
            Value::Text("student".into()),
        ),
        PropertyFamily::Topic => (PropertyKey::topic(), Value::Text("cinema".into())),
        PropertyFamily::Interest => (
            PropertyKey::interest("cinema"),
            Value::Interest(InterestLevel::High),
        ),
        PropertyFamily::Favourite => (PropertyKey::favourite("film"), Value::Text("tenet".into())),
        PropertyFamily::SharedFavourite => (
            PropertyKey::shared_favourite("film"),
            Value::Text("tenet".into()),
        ),
        PropertyFamily::Attire => (PropertyKey::attire("color"), Value::Text("blue".into())),
        PropertyFamily::Emotion => {
            let v = valence.expect("emotion cells carry a valence");
            (
                PropertyKey::emotion(),
                Value::Valence(perceive_valence(robot, v)),
            )
        }
    };
    let probability =
        get_probability(robot, &key, valence).map_err(|e| SimError::Script(e.to_string()))?;
    Ok(MemoryRecord {
        key,
        value,
        probability,
        status: RecallStatus::Stored,
        observed_valence: valence,
        session_observed: 1,
    })
}

/// Stores one record per cell for `trials` fresh users and counts how often
/// stochastic recall keeps it.
pub fn stats(trials: u32, seed: u64) -> Result<Vec<StatsRow>, SimError> {
    let config = RecallConfig::stochastic(seed);
    let mut rows = Vec::new();
    for robot in RobotId::ALL {
        for family in PropertyFamily::ALL {
            let valences: Vec<Option<Valence>> = if family == PropertyFamily::Emotion {
                Valence::ALL.into_iter().map(Some).collect()
            } else {
                vec![None]
            };
            for valence in valences {
                let record = sample_record(robot, family, valence)?;
                let mut remembered = 0u32;
                for trial in 0..trials {
                    let user = match valence {
                        Some(v) => format!("stats-{trial}-{v}"),
                        None => format!("stats-{trial}"),
                    };
                    let mut model = UserModel::new(user, robot);
                    model.insert(record.clone());
                    let (_, outcome) = recall(&model, &config, 2)?;
                    if outcome.is_remembered(&record.key) {
                        remembered += 1;
                    }
                }
                rows.push(StatsRow {
                    robot,
                    family,
                    valence,
                    expected: record.probability,
                    observed: if trials == 0 {
                        0.0
                    } else {
                        f64::from(remembered) / f64::from(trials)
                    },
                    trials,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with columns robot, family, valence, expected,
/// observed, trials.
pub fn write_stats_csv<W: io::Write>(rows: &[StatsRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "robot", "family", "valence", "expected", "observed", "trials",
    ])?;
    for r in rows {
        w.write_record([
            r.robot.as_str().to_string(),
            r.family.as_str().to_string(),
            r.valence.map(|v| v.to_string()).unwrap_or_default(),
            r.expected.to_string(),
            format!("{:.4}", r.observed),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayReport {
    Identical {
        sessions: usize,
        robot_turns: usize,
    },
    Diverged {
        session_id: String,
        turn: u32,
        expected: String,
        actual: String,
    },
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        matches!(self, ReplayReport::Identical { .. })
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayReport::Identical { .. } => f.write_str("identical"),
            ReplayReport::Diverged {
                session_id,
                turn,
                expected,
                actual,
            } => write!(
                f,
                "divergence in session {session_id} at turn {turn}\n  recorded:  {expected}\n  replayed:  {actual}"
            ),
        }
    }
}

fn describe(text: &str, acts: &[DialogueAct]) -> String {
    let acts = serde_json::to_string(acts).expect("acts serialize");
    format!("{text} {acts}")
}

/// Re-feeds the user turns of a transcript into a fresh engine and compares
/// every robot turn with the recorded one.
pub fn replay(lines: &[TranscriptLine]) -> Result<ReplayReport, SimError> {
    let format = |line: usize, reason: String| SimError::Format { line, reason };
    let first = lines
        .first()
        .ok_or_else(|| format(0, "empty transcript".into()))?;
    if let Some((i, _)) = lines
        .iter()
        .enumerate()
        .find(|(_, l)| l.user_id != first.user_id || l.robot != first.robot)
    {
        return Err(format(i + 1, "transcript mixes users or robots".into()));
    }
    let engine = DialogueEngine::new(Arc::new(MemoryStore::new()));
    let mut sessions = 0;
    let mut robot_turns = 0;
    let mut i = 0;
    while i < lines.len() {
        let head = &lines[i];
        let end = lines[i..]
            .iter()
            .position(|l| l.session_id != head.session_id)
            .map_or(lines.len(), |n| i + n);
        let group = &lines[i..end];
        for (n, l) in group.iter().enumerate() {
            if l.turn as usize != n {
                return Err(format(
                    i + n + 1,
                    format!("expected turn {n}, found {}", l.turn),
                ));
            }
            if l.session_index != head.session_index || l.config() != head.config() {
                return Err(format(
                    i + n + 1,
                    "session settings change mid-session".into(),
                ));
            }
            let expected = if n % 2 == 0 {
                Speaker::Robot
            } else {
                Speaker::User
            };
            if l.speaker != expected {
                return Err(format(i + n + 1, format!("expected a {expected:?} turn")));
            }
        }
        let diverged = |turn: u32, expected: String, actual: String| ReplayReport::Diverged {
            session_id: head.session_id.clone(),
            turn,
            expected,
            actual,
        };

        let (mut state, opening) = match engine.start_session(
            head.session_id.clone(),
            &head.user_id,
            head.robot,
            head.config(),
        ) {
            Ok(ok) => ok,
            Err(e) => {
                return Ok(diverged(
                    0,
                    describe(&head.text, &head.acts),
                    format!("error: {e}"),
                ))
            }
        };
        if state.session_index() != head.session_index {
            return Ok(diverged(
                0,
                format!("session index {}", head.session_index),
                format!("session index {}", state.session_index()),
            ));
        }
        if opening.text != head.text || opening.acts != head.acts {
            return Ok(diverged(
                0,
                describe(&head.text, &head.acts),
                describe(&opening.text, &opening.acts),
            ));
        }
        robot_turns += 1;
        for pair in group[1..].chunks(2) {
            let user = &pair[0];
            let side = user.side_channel.clone().unwrap_or_default();
            let result = engine.step(&mut state, &user.text, &side);
            let Some(recorded) = pair.get(1) else {
                break;
            };
            let reply = match result {
                Ok(r) => r,
                Err(e) => {
                    return Ok(diverged(
                        recorded.turn,
                        describe(&recorded.text, &recorded.acts),
                        format!("error: {e}"),
                    ))
                }
            };
            if reply.text != recorded.text || reply.acts != recorded.acts {
                return Ok(diverged(
                    recorded.turn,
                    describe(&recorded.text, &recorded.acts),
                    describe(&reply.text, &reply.acts),
                ));
            }
            robot_turns += 1;
        }
        sessions += 1;
        i = end;
    }
    Ok(ReplayReport::Identical {
        sessions,
        robot_turns,
    })
}

/// Reads a JSON-lines transcript and replays it.
pub fn replay_file(path: impl AsRef<Path>) -> Result<ReplayReport, SimError> {
    let text = std::fs::read_to_string(path)?;
    let lines = parse_jsonl(&text).map_err(|(line, e)| SimError::Format {
        line,
        reason: e.to_string(),
    })?;
    replay(&lines)
}
