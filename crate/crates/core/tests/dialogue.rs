use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use robomem_core::dialogue::{
    ActKind, DialogueAct, DialogueEngine, DialogueState, EngineError, Phase, SideChannel,
    MAX_REPROMPTS,
};
use robomem_core::memory::{PropertyFamily, PropertyKey, RecallStatus, Valence};
use robomem_core::persona::RobotId;
use robomem_core::recall::{ObservedValue, RecallConfig};
use robomem_core::sim::{run_session, UserScript};
use robomem_core::store::{JsonFileStore, MemoryStore, ModelStore};

fn engine() -> DialogueEngine {
    DialogueEngine::new(Arc::new(MemoryStore::new()))
}

fn quiet() -> SideChannel {
    SideChannel::default()
}

fn answer_until(engine: &DialogueEngine, state: &mut DialogueState, stop: &PropertyKey) {
    let script = UserScript::canonical();
    while state.awaiting().and_then(DialogueAct::key).as_ref() != Some(stop) {
        let text = script.reply_to(state.awaiting()).to_string();
        engine.step(state, &text, &quiet()).unwrap();
    }
}

#[test]
fn first_session_opens_with_anonymous_greeting_and_name_question() {
    let engine = engine();
    for robot in RobotId::ALL {
        let (state, reply) = engine
            .start_session("s", "ann", robot, RecallConfig::threshold())
            .unwrap();
        let kinds: Vec<_> = reply.acts.iter().map(DialogueAct::kind).collect();
        assert_eq!(kinds, [ActKind::GreetAnonymous, ActKind::AskSlot]);
        assert_eq!(reply.acts[1].key(), Some(PropertyKey::username()));
        assert_eq!(state.session_index(), 1);
        assert!(state.recall_outcome().is_none());
        assert_eq!(state.phase(), Phase::Greeting);
        assert_eq!(state.pending_slots()[0], PropertyKey::username());
    }
}

#[test]
fn empty_answer_repeats_the_question_then_moves_on() {
    let engine = engine();
    let (mut state, opening) = engine
        .start_session("s", "ann", RobotId::RoboTech, RecallConfig::threshold())
        .unwrap();
    let before = state.pending_slots();
    for _ in 0..MAX_REPROMPTS {
        let reply = engine.step(&mut state, "   ", &quiet()).unwrap();
        assert_eq!(reply.acts, vec![opening.acts[1].clone()]);
        assert_eq!(state.pending_slots(), before);
        assert!(state.collected().is_empty());
    }
    let reply = engine.step(&mut state, "", &quiet()).unwrap();
    assert_eq!(
        reply.acts[0].key(),
        Some(PropertyKey::personal("profession"))
    );
    assert_eq!(state.pending_slots().len(), before.len() - 1);
}

#[test]
fn unparseable_interest_is_asked_again() {
    let engine = engine();
    let (mut state, _) = engine
        .start_session("s", "ann", RobotId::MindStorm, RecallConfig::threshold())
        .unwrap();
    answer_until(&engine, &mut state, &PropertyKey::interest("cinema"));
    let reply = engine.step(&mut state, "purple", &quiet()).unwrap();
    assert_eq!(reply.acts.len(), 1);
    assert_eq!(reply.acts[0].key(), Some(PropertyKey::interest("cinema")));
    let reply = engine.step(&mut state, "A lot", &quiet()).unwrap();
    assert_eq!(reply.acts[0].kind(), ActKind::Acknowledge);
    assert_eq!(reply.acts[0].slot("value"), Some("high"));
}

#[test]
fn mindstorm_asks_why_after_a_favourite() {
    let engine = engine();
    let (mut state, _) = engine
        .start_session("s", "ann", RobotId::MindStorm, RecallConfig::threshold())
        .unwrap();
    answer_until(&engine, &mut state, &PropertyKey::favourite("film"));
    let reply = engine.step(&mut state, "Tenet", &quiet()).unwrap();
    let last = state.collected().last().unwrap();
    assert_eq!(last.key, PropertyKey::favourite("film"));
    assert_eq!(last.raw_value, ObservedValue::Text("tenet".into()));
    assert_eq!(reply.acts.last().unwrap().kind(), ActKind::AskMotivation);
    assert_eq!(reply.acts.last().unwrap().slot("value"), Some("tenet"));
    // The motivation is not stored.
    let n = state.collected().len();
    engine
        .step(&mut state, "It plays with time", &quiet())
        .unwrap();
    assert_eq!(state.collected().len(), n);
}

#[test]
fn favourite_answers_are_matched_against_the_knowledge_base() {
    let engine = engine();
    let (mut state, _) = engine
        .start_session("s", "ann", RobotId::RoboTech, RecallConfig::threshold())
        .unwrap();
    answer_until(&engine, &mut state, &PropertyKey::favourite("director"));
    engine
        .step(&mut state, "Probably Christopher Nolan!", &quiet())
        .unwrap();
    assert_eq!(
        state.collected().last().unwrap().raw_value,
        ObservedValue::Text("christopher nolan".into())
    );
}

#[test]
fn sunnybot_stores_neutral_emotion_as_positive() {
    let store = Arc::new(MemoryStore::new());
    let engine = DialogueEngine::new(store.clone());
    let mut script = UserScript::canonical();
    script.side_channel.emotion_valence = Some(Valence::Neutral);
    run_session(
        &engine,
        RobotId::SunnyBot,
        &script,
        RecallConfig::threshold(),
    )
    .unwrap();
    let model = store.load("benedetta", RobotId::SunnyBot).unwrap();
    let emotion = model.get(&PropertyKey::emotion()).unwrap();
    assert_eq!(emotion.value.as_text(), "positive");
    assert_eq!(emotion.observed_valence, Some(Valence::Neutral));
    assert_eq!(emotion.probability, 1.0);
}

#[test]
fn prevalent_emotion_wins() {
    let store = Arc::new(MemoryStore::new());
    let engine = DialogueEngine::new(store.clone());
    let script = UserScript::canonical();
    let (mut state, _) = engine
        .start_session(
            "s",
            "benedetta",
            RobotId::RoboTech,
            RecallConfig::threshold(),
        )
        .unwrap();
    let valences = [Valence::Negative, Valence::Positive, Valence::Positive];
    let mut turn = 0;
    while state.phase() != Phase::Closed {
        let side = SideChannel {
            emotion_valence: valences.get(turn).copied(),
            attire: None,
        };
        let text = script.reply_to(state.awaiting()).to_string();
        engine.step(&mut state, &text, &side).unwrap();
        turn += 1;
    }
    let model = store.load("benedetta", RobotId::RoboTech).unwrap();
    assert_eq!(
        model.get(&PropertyKey::emotion()).unwrap().value.as_text(),
        "positive"
    );
}

#[test]
fn first_session_covers_every_family() {
    let store = Arc::new(MemoryStore::new());
    let engine = DialogueEngine::new(store.clone());
    for robot in RobotId::ALL {
        run_session(
            &engine,
            robot,
            &UserScript::canonical(),
            RecallConfig::threshold(),
        )
        .unwrap();
        let model = store.load("benedetta", robot).unwrap();
        let families: BTreeSet<_> = model.records().map(|r| r.key.family()).collect();
        for family in PropertyFamily::ALL {
            if family.is_favourite() {
                continue;
            }
            assert!(families.contains(&family), "{robot} lacks {family}");
        }
        for category in ["film", "actor", "director"] {
            let fav = model.get(&PropertyKey::favourite(category)).is_some();
            let shared = model
                .get(&PropertyKey::shared_favourite(category))
                .is_some();
            assert!(fav ^ shared, "{robot} {category}");
        }
        assert!(model.records().all(|r| r.status == RecallStatus::Stored));
        assert_eq!(model.completed_sessions, 1);
    }
}

#[test]
fn closed_sessions_reject_messages() {
    let engine = engine();
    let (mut state, _) = engine
        .start_session(
            "s",
            "benedetta",
            RobotId::SunnyBot,
            RecallConfig::threshold(),
        )
        .unwrap();
    let script = UserScript::canonical();
    let mut last = None;
    while state.phase() != Phase::Closed {
        let text = script.reply_to(state.awaiting()).to_string();
        last = Some(engine.step(&mut state, &text, &quiet()).unwrap());
    }
    let last = last.unwrap();
    assert_eq!(last.phase, Phase::Closed);
    assert_eq!(last.acts.last().unwrap().kind(), ActKind::Farewell);
    assert!(matches!(
        engine.step(&mut state, "hello?", &quiet()),
        Err(EngineError::SessionClosed(_))
    ));
}

#[test]
fn invalid_side_channel_leaves_state_untouched() {
    let engine = engine();
    let (mut state, _) = engine
        .start_session("s", "ann", RobotId::SunnyBot, RecallConfig::threshold())
        .unwrap();
    let side = SideChannel {
        emotion_valence: None,
        attire: Some([("color".to_string(), "".to_string())].into()),
    };
    let pending = state.pending_slots();
    assert!(matches!(
        engine.step(&mut state, "Ann", &side),
        Err(EngineError::InvalidSideChannel(_))
    ));
    assert_eq!(state.pending_slots(), pending);
    assert!(state.collected().is_empty());
}

#[test]
fn failed_save_keeps_the_session_open() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(JsonFileStore::new(dir.path()));
    let engine = DialogueEngine::new(store.clone());
    let script = UserScript::canonical();
    let (mut state, _) = engine
        .start_session(
            "s",
            "benedetta",
            RobotId::MindStorm,
            RecallConfig::threshold(),
        )
        .unwrap();
    answer_until(&engine, &mut state, &PropertyKey::favourite("director"));
    engine
        .step(&mut state, "Christopher Nolan", &quiet())
        .unwrap();
    assert_eq!(state.awaiting().unwrap().kind(), ActKind::AskMotivation);

    // Block the model file's directory entry so the closing save fails.
    let path = store.model_path("benedetta", RobotId::MindStorm).unwrap();
    std::fs::create_dir_all(&path).unwrap();
    let err = engine.step(&mut state, &script.motivation_reply, &quiet());
    assert!(matches!(err, Err(EngineError::Store(_))), "{err:?}");
    assert_eq!(state.awaiting().unwrap().kind(), ActKind::AskMotivation);
    assert_ne!(state.phase(), Phase::Closed);

    std::fs::remove_dir(&path).unwrap();
    let reply = engine
        .step(&mut state, &script.motivation_reply, &quiet())
        .unwrap();
    assert_eq!(reply.phase, Phase::Closed);
    assert_eq!(
        store
            .load("benedetta", RobotId::MindStorm)
            .unwrap()
            .completed_sessions,
        1
    );
}

#[test]
fn later_sessions_only_utter_what_is_remembered_or_just_heard() {
    for mode in [RecallConfig::threshold(), RecallConfig::stochastic(11)] {
        for robot in RobotId::ALL {
            let store = Arc::new(MemoryStore::new());
            let engine = DialogueEngine::new(store.clone());
            let script = UserScript::canonical();
            for _ in 0..3 {
                let index = store.load("benedetta", robot).unwrap().completed_sessions + 1;
                let (mut state, opening) = engine
                    .start_session(format!("s{index}"), "benedetta", robot, mode)
                    .unwrap();
                let mut acts = opening.acts;
                while state.phase() != Phase::Closed {
                    let text = script.reply_to(state.awaiting()).to_string();
                    let reply = engine.step(&mut state, &text, &quiet()).unwrap();
                    let mut allowed: BTreeSet<PropertyKey> =
                        state.collected().iter().map(|o| o.key.clone()).collect();
                    if let Some(outcome) = state.recall_outcome() {
                        allowed.extend(outcome.remembered.iter().cloned());
                    }
                    for act in &reply.acts {
                        let uses = act.grounding();
                        // Favourites are collected as favourite(c) but may be stored as shared.
                        assert!(
                            uses.iter().all(|k| allowed.contains(k)
                                || k.param()
                                    .is_some_and(|c| allowed.contains(&PropertyKey::favourite(c)))),
                            "{robot} {act}: {uses:?}"
                        );
                    }
                    acts.extend(reply.acts);
                }
                if let Some(outcome) = state.recall_outcome() {
                    for act in acts.iter().filter(|a| a.kind() != ActKind::Farewell) {
                        assert!(
                            act.grounding().is_subset(&outcome.remembered),
                            "{robot} {act}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn transcripts_are_deterministic() {
    let run = || {
        let store = Arc::new(MemoryStore::new());
        let engine = DialogueEngine::new(store.clone());
        for _ in 0..3 {
            run_session(
                &engine,
                RobotId::SunnyBot,
                &UserScript::canonical(),
                RecallConfig::stochastic(5),
            )
            .unwrap();
        }
        store
            .read_transcript("benedetta", RobotId::SunnyBot)
            .unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a
        .windows(2)
        .all(|w| w[0].session_id != w[1].session_id || w[1].turn == w[0].turn + 1));
}

#[derive(Debug, Clone)]
enum Msg {
    Empty,
    Garbage,
    Scripted,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_step_makes_progress(
        robot in prop::sample::select(RobotId::ALL.to_vec()),
        msgs in prop::collection::vec(
            prop_oneof![Just(Msg::Empty), Just(Msg::Garbage), Just(Msg::Scripted)],
            0..120,
        ),
    ) {
        let engine = engine();
        let script = UserScript::canonical();
        let (mut state, _) = engine
            .start_session("s", "ann", robot, RecallConfig::threshold())
            .unwrap();
        let mut steps = 0;
        let mut msgs = msgs.into_iter();
        while state.phase() != Phase::Closed {
            let before = state.pending_slots();
            let phase = state.phase();
            let text = match msgs.next().unwrap_or(Msg::Scripted) {
                Msg::Empty => String::new(),
                Msg::Garbage => "??".to_string(),
                Msg::Scripted => script.reply_to(state.awaiting()).to_string(),
            };
            engine.step(&mut state, &text, &quiet()).unwrap();
            let after = state.pending_slots();
            prop_assert!(after.len() <= before.len());
            prop_assert!(
                after.len() < before.len() || after == before || state.phase() != phase
                    || before.is_empty()
            );
            steps += 1;
            // Seven slots, two follow-ups, a motivation per favourite and
            // the reprompts bound the session.
            prop_assert!(steps <= 9 * (MAX_REPROMPTS as usize + 1) + 4 + 1);
        }
    }
}
