//! Lines of the append-only conversation log.

use serde::{Deserialize, Serialize};

use crate::dialogue::act::{DialogueAct, SideChannel};
use crate::persona::RobotId;
use crate::recall::{RecallConfig, RecallMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Robot,
}

/// One turn of a session. Every line repeats the session's recall settings
/// so a log can be replayed on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub session_id: String,
    pub turn: u32,
    pub speaker: Speaker,
    pub text: String,
    pub acts: Vec<DialogueAct>,
    pub side_channel: Option<SideChannel>,
    pub user_id: String,
    pub robot: RobotId,
    pub session_index: u32,
    pub mode: RecallMode,
    pub threshold: f64,
    pub seed: u64,
}

impl TranscriptLine {
    pub fn config(&self) -> RecallConfig {
        RecallConfig {
            mode: self.mode,
            threshold: self.threshold,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript lines always serialize")
    }
}

/// Parses a JSON-lines log, skipping blank lines. Errors carry the 1-based
/// line number.
pub fn parse_jsonl(text: &str) -> Result<Vec<TranscriptLine>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}
