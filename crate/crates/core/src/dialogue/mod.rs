//! Persona-styled, slot-filling conversations.
//!
//! A first session asks for every slot of the user model; later sessions
//! open with acts planned from what recall kept. Acts are typed and carry
//! their slot values; text is rendered from per-persona templates.

pub mod act;
pub mod engine;
pub mod plan;
pub mod templates;

pub use act::{ActError, ActKind, DialogueAct, SideChannel};
pub use engine::{DialogueEngine, DialogueState, EngineError, Phase, Reply, MAX_REPROMPTS};
pub use plan::{first_session_script, first_session_slots, plan_recall_acts};
pub use templates::{render, TemplateError, TemplatePack, TemplateSet};
