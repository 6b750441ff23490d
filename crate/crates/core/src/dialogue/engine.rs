use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::act::{ActKind, DialogueAct, SideChannel};
use super::plan::{first_session_script, plan_recall_acts};
use super::templates::{TemplateError, TemplateSet};
use crate::kb::{EntityType, KnowledgeBase};
use crate::memory::{
    normalize_value, InterestLevel, MemoryError, PropertyFamily, PropertyKey, UserModel, Valence,
};
use crate::persona::{style_params, PersonaProfile, PersonaRegistry, RobotId, StyleParams};
use crate::recall::{
    populate, reacquire, recall, Observation, ObservedValue, RecallConfig, RecallError,
    RecallOutcome,
};
use crate::store::{ModelStore, StoreError};
use crate::transcript::{Speaker, TranscriptLine};

/// Times an unusable answer is met by repeating the question before the
/// slot is dropped.
pub const MAX_REPROMPTS: u32 = 2;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("invalid side channel: {0}")]
    InvalidSideChannel(MemoryError),
    #[error(transparent)]
    Recall(#[from] RecallError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Waiting for the reply to the opening.
    Greeting,
    SlotFilling,
    RecallTalk,
    /// Closing acts planned, model not yet persisted. Only seen inside a
    /// step; a failed save leaves the state as it was before the step.
    Farewell,
    Closed,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Greeting => "greeting",
            Phase::SlotFilling => "slot_filling",
            Phase::RecallTalk => "recall_talk",
            Phase::Farewell => "farewell",
            Phase::Closed => "closed",
        }
    }
}

/// What the robot says in one turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reply {
    pub acts: Vec<DialogueAct>,
    pub text: String,
    pub phase: Phase,
}

/// Progress of one conversation.
#[derive(Debug, Clone)]
pub struct DialogueState {
    session_id: String,
    user_id: String,
    robot: RobotId,
    session_index: u32,
    config: RecallConfig,
    phase: Phase,
    recall_outcome: Option<RecallOutcome>,
    collected: Vec<Observation>,
    reasked: BTreeSet<PropertyKey>,
    agenda: VecDeque<DialogueAct>,
    awaiting: Option<DialogueAct>,
    reprompts: u32,
    name: Option<String>,
    turn: u32,
}

impl DialogueState {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn robot(&self) -> RobotId {
        self.robot
    }

    pub fn session_index(&self) -> u32 {
        self.session_index
    }

    pub fn config(&self) -> RecallConfig {
        self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn recall_outcome(&self) -> Option<&RecallOutcome> {
        self.recall_outcome.as_ref()
    }

    /// Everything observed so far this session, in arrival order.
    pub fn collected(&self) -> &[Observation] {
        &self.collected
    }

    /// Slots still to be filled, the one being asked first.
    pub fn pending_slots(&self) -> Vec<PropertyKey> {
        self.awaiting
            .iter()
            .chain(self.agenda.iter())
            .filter(|a| a.kind().asks_for_slot())
            .filter_map(DialogueAct::key)
            .collect()
    }

    /// The act the next user message answers.
    pub fn awaiting(&self) -> Option<&DialogueAct> {
        self.awaiting.as_ref()
    }

    fn line(
        &mut self,
        speaker: Speaker,
        reply: (&str, &[DialogueAct]),
        side: Option<SideChannel>,
    ) -> TranscriptLine {
        let line = TranscriptLine {
            session_id: self.session_id.clone(),
            turn: self.turn,
            speaker,
            text: reply.0.to_string(),
            acts: reply.1.to_vec(),
            side_channel: side,
            user_id: self.user_id.clone(),
            robot: self.robot,
            session_index: self.session_index,
            mode: self.config.mode,
            threshold: self.config.threshold,
            seed: self.config.seed,
        };
        self.turn += 1;
        line
    }

    /// Emits agenda acts up to and including the next one that hands the
    /// turn back; an empty agenda ends the session.
    fn advance(&mut self, acts: &mut Vec<DialogueAct>) {
        self.awaiting = None;
        self.reprompts = 0;
        while let Some(act) = self.agenda.pop_front() {
            let yields = act.kind().yields_turn();
            acts.push(act.clone());
            if yields {
                self.awaiting = Some(act);
                return;
            }
        }
        acts.push(DialogueAct::farewell(self.name.as_deref()));
        self.phase = Phase::Farewell;
    }

    /// Observations to persist: answers and attire in order, plus the
    /// session's prevalent emotion (most frequent, latest on ties).
    fn closing_observations(&self) -> (Vec<Observation>, Vec<Observation>) {
        let mut counts: BTreeMap<Valence, (usize, usize)> = BTreeMap::new();
        let mut fresh = Vec::new();
        let mut reacquired = Vec::new();
        for (i, obs) in self.collected.iter().enumerate() {
            match (&obs.key.family(), &obs.raw_value) {
                (PropertyFamily::Emotion, ObservedValue::Valence(v)) => {
                    let c = counts.entry(*v).or_default();
                    c.0 += 1;
                    c.1 = i;
                }
                _ if self.reasked.contains(&obs.key) => reacquired.push(obs.clone()),
                _ => fresh.push(obs.clone()),
            }
        }
        if let Some((v, _)) = counts.into_iter().max_by_key(|(_, c)| *c) {
            fresh.push(Observation::emotion(v));
        }
        (fresh, reacquired)
    }
}

/// Reads an answer for `key`; `None` when it cannot fill the slot.
fn parse_answer(kb: &KnowledgeBase, key: &PropertyKey, text: &str) -> Option<Observation> {
    match key.family() {
        PropertyFamily::Interest => {
            let level = InterestLevel::parse_answer(text).ok()?;
            Some(Observation {
                raw_value: ObservedValue::Interest(level),
                ..Observation::answer(key.clone(), "")
            })
        }
        family if family.is_favourite() => {
            let entity = key
                .param()
                .and_then(EntityType::for_category)
                .and_then(|t| kb.match_entity(t, text));
            let value = match entity {
                Some(e) => e.name.clone(),
                None => normalize_value(text).ok()?,
            };
            Some(Observation::answer(key.clone(), value))
        }
        _ => Some(Observation::answer(
            key.clone(),
            normalize_value(text).ok()?,
        )),
    }
}

fn answer_text(obs: &Observation) -> String {
    match &obs.raw_value {
        ObservedValue::Valence(v) => v.to_string(),
        ObservedValue::Interest(i) => i.to_string(),
        ObservedValue::Text(t) => t.clone(),
    }
}

/// Scripted, persona-styled conversations over a model store.
pub struct DialogueEngine {
    personas: PersonaRegistry,
    kb: KnowledgeBase,
    templates: TemplateSet,
    store: Arc<dyn ModelStore>,
}

impl DialogueEngine {
    /// An engine with the bundled personas, knowledge base and templates.
    pub fn new(store: Arc<dyn ModelStore>) -> Self {
        Self::with_resources(
            PersonaRegistry::builtin(),
            KnowledgeBase::builtin(),
            TemplateSet::builtin(),
            store,
        )
    }

    pub fn with_resources(
        personas: PersonaRegistry,
        kb: KnowledgeBase,
        templates: TemplateSet,
        store: Arc<dyn ModelStore>,
    ) -> Self {
        Self {
            personas,
            kb,
            templates,
            store,
        }
    }

    pub fn store(&self) -> &Arc<dyn ModelStore> {
        &self.store
    }

    pub fn personas(&self) -> &PersonaRegistry {
        &self.personas
    }

    fn persona(&self, robot: RobotId) -> (&PersonaProfile, StyleParams) {
        let persona = self.personas.get(robot);
        (persona, style_params(persona))
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Opens a session. From the second session on, recall runs first and
    /// its outcome is saved before anything is said.
    pub fn start_session(
        &self,
        session_id: impl Into<String>,
        user_id: &str,
        robot: RobotId,
        config: RecallConfig,
    ) -> Result<(DialogueState, Reply), EngineError> {
        config.validate()?;
        let (persona, style) = self.persona(robot);
        let model = self.store.load(user_id, robot)?;
        let session_index = model.completed_sessions + 1;
        let (agenda, recall_outcome, name) = if session_index >= 2 {
            let mut outcome = None;
            let recalled = self.store.update(user_id, robot, &mut |m: UserModel| {
                let (next, o) = recall(&m, &config, m.completed_sessions + 1)?;
                outcome = Some(o);
                Ok(next)
            })?;
            let outcome = outcome.expect("update ran the recall");
            let acts = plan_recall_acts(&outcome, &recalled, &style, &self.kb);
            let name = recalled
                .get(&PropertyKey::username())
                .filter(|r| outcome.is_remembered(&r.key))
                .map(|r| r.value.as_text().to_string());
            (acts, Some(outcome), name)
        } else {
            (first_session_script(persona, &style), None, None)
        };
        let mut state = DialogueState {
            session_id: session_id.into(),
            user_id: user_id.to_string(),
            robot,
            session_index,
            config,
            phase: Phase::Greeting,
            recall_outcome,
            collected: Vec::new(),
            reasked: BTreeSet::new(),
            agenda: agenda.into(),
            awaiting: None,
            reprompts: 0,
            name,
            turn: 0,
        };
        let mut acts = Vec::new();
        state.advance(&mut acts);
        let mut lines = Vec::new();
        let reply = self.finish_turn(&mut state, acts, &mut lines)?;
        for line in &lines {
            self.store.append_transcript(line)?;
        }
        Ok((state, reply))
    }

    /// Renders the robot's turn and, if the session just ended, persists
    /// what it collected.
    fn finish_turn(
        &self,
        state: &mut DialogueState,
        acts: Vec<DialogueAct>,
        lines: &mut Vec<TranscriptLine>,
    ) -> Result<Reply, EngineError> {
        let text = self.templates.pack(state.robot).render(&acts)?;
        if state.phase == Phase::Farewell {
            self.close(state)?;
        }
        lines.push(state.line(Speaker::Robot, (&text, &acts), None));
        Ok(Reply {
            acts,
            text,
            phase: state.phase,
        })
    }

    fn close(&self, state: &mut DialogueState) -> Result<(), EngineError> {
        let (persona, _) = self.persona(state.robot);
        let (fresh, reacquired) = state.closing_observations();
        let index = state.session_index;
        self.store
            .update(&state.user_id, state.robot, &mut |m: UserModel| {
                let mut next = populate(&m, persona, &fresh, index)?;
                for obs in &reacquired {
                    next = reacquire(&next, persona, obs, index)?;
                }
                next.completed_sessions = index;
                Ok(next)
            })?;
        state.phase = Phase::Closed;
        Ok(())
    }

    /// Feeds one user message. On error the state is left unchanged.
    pub fn step(
        &self,
        state: &mut DialogueState,
        user_text: &str,
        side: &SideChannel,
    ) -> Result<Reply, EngineError> {
        if state.phase == Phase::Closed {
            return Err(EngineError::SessionClosed(state.session_id.clone()));
        }
        let side = side.normalized().map_err(EngineError::InvalidSideChannel)?;
        let mut next = state.clone();
        let mut lines = Vec::new();
        let logged_side = (!side.is_empty()).then(|| side.clone());
        lines.push(next.line(Speaker::User, (user_text, &[]), logged_side));
        let acts = self.respond(&mut next, user_text, &side)?;
        let reply = self.finish_turn(&mut next, acts, &mut lines)?;
        *state = next;
        for line in &lines {
            self.store.append_transcript(line)?;
        }
        Ok(reply)
    }

    fn respond(
        &self,
        state: &mut DialogueState,
        user_text: &str,
        side: &SideChannel,
    ) -> Result<Vec<DialogueAct>, EngineError> {
        let (_, style) = self.persona(state.robot);
        if let Some(v) = side.emotion_valence {
            state.collected.push(Observation::emotion(v));
        }
        for (aspect, value) in side.attire.iter().flatten() {
            state
                .collected
                .push(Observation::attire(aspect, value.as_str()));
        }
        if state.phase == Phase::Greeting {
            state.phase = if state.recall_outcome.is_some() {
                Phase::RecallTalk
            } else {
                Phase::SlotFilling
            };
        }

        let mut acts = Vec::new();
        let Some(awaiting) = state.awaiting.clone() else {
            state.advance(&mut acts);
            return Ok(acts);
        };
        if !awaiting.kind().asks_for_slot() {
            state.advance(&mut acts);
            return Ok(acts);
        }
        let key = awaiting.key().expect("asking acts carry a key");
        match parse_answer(&self.kb, &key, user_text) {
            None if state.reprompts < MAX_REPROMPTS => {
                state.reprompts += 1;
                acts.push(awaiting);
            }
            None => state.advance(&mut acts),
            Some(obs) => {
                obs.validate()?;
                let value = answer_text(&obs);
                if awaiting.kind() == ActKind::ReAsk {
                    state.reasked.insert(key.clone());
                }
                if key == PropertyKey::username() {
                    state.name = Some(value.clone());
                }
                state.collected.push(obs);
                acts.push(DialogueAct::acknowledge(&key, &value));
                if style.motivation_probing && key.family().is_favourite() {
                    state
                        .agenda
                        .push_front(DialogueAct::ask_motivation(&key, &value));
                }
                state.advance(&mut acts);
            }
        }
        Ok(acts)
    }
}
