use std::sync::Arc;

use robomem_core::dialogue::{ActKind, DialogueEngine};
use robomem_core::memory::{PropertyKey, RecallStatus};
use robomem_core::persona::RobotId;
use robomem_core::recall::RecallConfig;
use robomem_core::sim::{replay, replay_file, simulate, ReplayReport, SimError, UserScript};
use robomem_core::store::{JsonFileStore, ModelStore};
use robomem_core::transcript::Speaker;

fn simulate_into(dir: &std::path::Path, robot: RobotId, sessions: u32, config: RecallConfig) {
    let engine = DialogueEngine::new(Arc::new(JsonFileStore::new(dir)));
    simulate(&engine, robot, &UserScript::canonical(), sessions, config).unwrap();
}

#[test]
fn robotech_recommends_interstellar_in_session_two() {
    let dir = tempfile::tempdir().unwrap();
    let engine = DialogueEngine::new(Arc::new(JsonFileStore::new(dir.path())));
    let (runs, _) = simulate(
        &engine,
        RobotId::RoboTech,
        &UserScript::canonical(),
        2,
        RecallConfig::threshold(),
    )
    .unwrap();
    assert!(runs[1]
        .acts_of(ActKind::Recommend)
        .any(|a| a.slot("film") == Some("interstellar")));
}

#[test]
fn mindstorm_asks_the_name_again() {
    let dir = tempfile::tempdir().unwrap();
    let engine = DialogueEngine::new(Arc::new(JsonFileStore::new(dir.path())));
    let (runs, _) = simulate(
        &engine,
        RobotId::MindStorm,
        &UserScript::canonical(),
        2,
        RecallConfig::threshold(),
    )
    .unwrap();
    let first = &runs[1].acts[0];
    assert_eq!(first.kind(), ActKind::ReAsk);
    assert_eq!(first.key(), Some(PropertyKey::username()));
    assert!(first.is_hedged());
}

#[test]
fn a_single_session_performs_no_recall() {
    let dir = tempfile::tempdir().unwrap();
    let engine = DialogueEngine::new(Arc::new(JsonFileStore::new(dir.path())));
    let (runs, model) = simulate(
        &engine,
        RobotId::SunnyBot,
        &UserScript::canonical(),
        1,
        RecallConfig::stochastic(1),
    )
    .unwrap();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].outcome.is_none());
    assert!(!model.is_empty());
    assert!(model.records().all(|r| r.status == RecallStatus::Stored));
}

#[test]
fn simulation_output_is_reproducible() {
    let read_all = |dir: &std::path::Path| {
        let mut files: Vec<_> = walk(dir);
        files.sort();
        files
            .into_iter()
            .map(|p| {
                (
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect::<Vec<_>>()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for robot in RobotId::ALL {
            simulate_into(dir, robot, 3, RecallConfig::stochastic(99));
        }
    }
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, fb);
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn unmodified_transcript_replays_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(
        dir.path(),
        RobotId::SunnyBot,
        3,
        RecallConfig::stochastic(8),
    );
    let path = dir.path().join("benedetta/SunnyBot.log.jsonl");
    let report = replay_file(&path).unwrap();
    assert_eq!(report.to_string(), "identical");
    assert!(matches!(
        report,
        ReplayReport::Identical { sessions: 3, .. }
    ));
}

#[test]
fn edited_robot_line_is_reported_at_its_turn() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), RobotId::RoboTech, 2, RecallConfig::threshold());
    let store = JsonFileStore::new(dir.path());
    let mut lines = store
        .read_transcript("benedetta", RobotId::RoboTech)
        .unwrap();
    let target = lines
        .iter()
        .rposition(|l| l.speaker == Speaker::Robot && l.session_index == 2 && l.turn > 0)
        .unwrap();
    lines[target].text.push_str(" (edited)");
    let expected_turn = lines[target].turn;
    let expected_session = lines[target].session_id.clone();
    match replay(&lines).unwrap() {
        ReplayReport::Diverged {
            session_id, turn, ..
        } => {
            assert_eq!(turn, expected_turn);
            assert_eq!(session_id, expected_session);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn edited_user_line_changes_what_follows() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), RobotId::MindStorm, 1, RecallConfig::threshold());
    let store = JsonFileStore::new(dir.path());
    let mut lines = store
        .read_transcript("benedetta", RobotId::MindStorm)
        .unwrap();
    lines[1].text = "Giulia".into();
    let report = replay(&lines).unwrap();
    assert!(
        matches!(report, ReplayReport::Diverged { turn: 2, .. }),
        "{report}"
    );
}

#[test]
fn missing_seed_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), RobotId::SunnyBot, 1, RecallConfig::threshold());
    let path = dir.path().join("benedetta/SunnyBot.log.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        if i == 3 {
            v.as_object_mut().unwrap().remove("seed");
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    std::fs::write(&path, out).unwrap();
    match replay_file(&path) {
        Err(SimError::Format { line, reason }) => {
            assert_eq!(line, 4);
            assert!(reason.contains("seed"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn structurally_broken_transcripts_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), RobotId::SunnyBot, 1, RecallConfig::threshold());
    let store = JsonFileStore::new(dir.path());
    let lines = store
        .read_transcript("benedetta", RobotId::SunnyBot)
        .unwrap();

    assert!(matches!(replay(&[]), Err(SimError::Format { .. })));
    let mut swapped = lines.clone();
    swapped.swap(1, 2);
    assert!(matches!(replay(&swapped), Err(SimError::Format { .. })));
    let mut mixed = lines.clone();
    mixed[2].robot = RobotId::RoboTech;
    assert!(matches!(replay(&mixed), Err(SimError::Format { .. })));
    let mut reconfigured = lines;
    reconfigured[3].seed += 1;
    assert!(matches!(
        replay(&reconfigured),
        Err(SimError::Format { .. })
    ));
}
