//! Act planning for first and later sessions.

use std::collections::BTreeSet;

use super::act::DialogueAct;
use crate::kb::{KnowledgeBase, RecommendReason};
use crate::memory::{PropertyFamily, PropertyKey, UserModel};
use crate::persona::{PersonaProfile, StyleParams};
use crate::recall::RecallOutcome;

/// Slots every first session asks for, in order.
pub fn first_session_slots() -> [PropertyKey; 7] {
    [
        PropertyKey::username(),
        PropertyKey::personal("profession"),
        PropertyKey::topic(),
        PropertyKey::interest("cinema"),
        PropertyKey::favourite("film"),
        PropertyKey::favourite("actor"),
        PropertyKey::favourite("director"),
    ]
}

fn disclosure(persona: &PersonaProfile, key: &PropertyKey) -> Option<DialogueAct> {
    match (key.family(), key.param()) {
        (PropertyFamily::Personal | PropertyFamily::Interest, _) => {
            Some(DialogueAct::self_disclose(key, None))
        }
        (PropertyFamily::Favourite, Some(category)) => {
            if let Some(own) = persona.preference_for(category) {
                return Some(DialogueAct::self_disclose(key, Some(own)));
            }
            if category == "film" {
                if let Some(genre) = persona.preference_for("genre") {
                    return Some(DialogueAct::self_disclose(
                        &PropertyKey::favourite("genre"),
                        Some(genre),
                    ));
                }
            }
            Some(DialogueAct::self_disclose(key, None))
        }
        _ => None,
    }
}

fn detail_follow_up(key: &PropertyKey) -> Option<DialogueAct> {
    let detail = match (key.family(), key.param()) {
        (PropertyFamily::Personal, Some("profession")) => PropertyKey::personal("specialization"),
        (PropertyFamily::Favourite, Some("film")) => PropertyKey::favourite("genre"),
        _ => return None,
    };
    Some(DialogueAct::ask_detail(&detail, key))
}

/// The scripted first session: an anonymous greeting, then one question
/// per slot, with the persona's style adding disclosures and follow-ups.
pub fn first_session_script(persona: &PersonaProfile, style: &StyleParams) -> Vec<DialogueAct> {
    let mut acts = vec![DialogueAct::greet_anonymous(
        persona.robot_id.as_str(),
        &persona.motto,
    )];
    for key in first_session_slots() {
        if style.self_disclosure {
            acts.extend(disclosure(persona, &key));
        }
        acts.push(DialogueAct::ask_slot(&key));
        if style.detail_probing {
            acts.extend(detail_follow_up(&key));
        }
    }
    acts
}

fn remembered_favourites<'a>(
    outcome: &'a RecallOutcome,
    model: &'a UserModel,
) -> impl Iterator<Item = (&'a PropertyKey, &'a str, &'a str)> {
    outcome
        .remembered
        .iter()
        .filter(|k| k.family().is_favourite())
        .filter_map(move |k| Some((k, k.param()?, model.get(k)?.value.as_text())))
}

/// Acts of a later session, chosen from what the robot remembers.
///
/// Only remembered records are ever uttered. Forgotten topic and favourite
/// film are asked again; forgotten personal details only by detail-probing
/// personas.
pub fn plan_recall_acts(
    outcome: &RecallOutcome,
    model: &UserModel,
    style: &StyleParams,
    kb: &KnowledgeBase,
) -> Vec<DialogueAct> {
    let value = |key: &PropertyKey| {
        outcome
            .is_remembered(key)
            .then(|| model.get(key).map(|r| r.value.as_text()))
            .flatten()
    };
    let remembered_in = |family: PropertyFamily| {
        outcome
            .remembered
            .iter()
            .filter(move |k| k.family() == family)
            .filter_map(|k| Some((k.param()?, model.get(k)?.value.as_text())))
    };
    let hedged = style.hedged_recall;
    let mut acts = Vec::new();

    match value(&PropertyKey::username()) {
        Some(name) => acts.push(DialogueAct::greet_with_name(name)),
        None => acts.push(DialogueAct::re_ask(&PropertyKey::username(), hedged)),
    }
    for (param, v) in remembered_in(PropertyFamily::Personal) {
        acts.push(DialogueAct::recall_personal(param, v));
    }
    for (aspect, v) in remembered_in(PropertyFamily::Attire) {
        acts.push(DialogueAct::comment_attire(aspect, v));
    }
    if let Some(record) = model
        .get(&PropertyKey::emotion())
        .filter(|r| outcome.is_remembered(&r.key))
    {
        acts.push(DialogueAct::reference_emotion(
            record
                .value
                .as_text()
                .parse()
                .expect("emotion records hold a valence"),
        ));
    }
    if outcome.is_forgotten(&PropertyKey::topic()) {
        acts.push(DialogueAct::re_ask(&PropertyKey::topic(), hedged));
    }
    if style.preference_mirroring {
        for (category, v) in remembered_in(PropertyFamily::SharedFavourite) {
            acts.push(DialogueAct::shared_favourite_callout(category, v));
        }
    }

    let favourites: BTreeSet<(String, String)> = remembered_favourites(outcome, model)
        .map(|(_, c, v)| (c.to_string(), v.to_string()))
        .collect();
    if let Some(rec) = kb.recommend(&favourites) {
        let used: Vec<(&str, &str)> = match &rec.reason {
            RecommendReason::GenreMatch {
                director,
                favourite_film,
                ..
            } => vec![("director", director), ("film", favourite_film)],
            RecommendReason::SameDirector { director } => vec![("director", director)],
            RecommendReason::UpcomingWithActor { actor } => vec![("actor", actor)],
        };
        let basis: BTreeSet<PropertyKey> = remembered_favourites(outcome, model)
            .filter(|(_, c, v)| used.contains(&(*c, *v)))
            .map(|(k, _, _)| k.clone())
            .collect();
        acts.push(DialogueAct::recommend(&rec, &basis));
    }

    let film_forgotten = [
        PropertyKey::favourite("film"),
        PropertyKey::shared_favourite("film"),
    ]
    .iter()
    .any(|k| outcome.is_forgotten(k));
    if film_forgotten {
        acts.push(DialogueAct::re_ask(&PropertyKey::favourite("film"), hedged));
    }
    if style.detail_probing {
        for key in outcome
            .forgotten
            .iter()
            .filter(|k| k.family() == PropertyFamily::Personal)
        {
            acts.push(DialogueAct::re_ask(key, hedged));
        }
    }
    acts
}
