use std::path::Path;
use std::process::{Command, Output};

fn robomem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robomem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn simulate(store: &Path, robot: &str, extra: &[&str]) -> String {
    let store = store.to_str().unwrap();
    let mut args = vec!["simulate", "--robot", robot, "--store", store];
    args.extend_from_slice(extra);
    stdout(&robomem(&args))
}

fn session_line<'a>(out: &'a str, session: &str) -> &'a str {
    out.lines()
        .find(|l| l.starts_with(session))
        .unwrap_or_else(|| panic!("no {session} in\n{out}"))
}

#[test]
fn robotech_recommends_interstellar() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        "RoboTech",
        &["--sessions", "2", "--mode", "threshold"],
    );
    let second = session_line(&out, "benedetta-robotech-2:");
    assert!(second.contains("GreetWithName"), "{second}");
    assert!(second.contains("RecallPersonal(profession)"), "{second}");
    assert!(second.contains("Recommend(interstellar)"), "{second}");
    assert!(dir.path().join("benedetta/RoboTech.json").is_file());
    assert!(dir.path().join("benedetta/RoboTech.log.jsonl").is_file());
}

#[test]
fn mindstorm_asks_the_name_again() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "mindstorm", &[]);
    let second = session_line(&out, "benedetta-mindstorm-2:");
    assert!(
        second.starts_with("benedetta-mindstorm-2: ReAsk(username)"),
        "{second}"
    );
    assert!(!second.contains("Recommend"), "{second}");
}

#[test]
fn one_session_stores_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "SunnyBot", &["--sessions", "1"]);
    let model: serde_json::Value = serde_json::from_str(&out[out.find('{').unwrap()..]).unwrap();
    let records = model["records"].as_array().unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r["status"] == "stored"));
}

#[test]
fn simulate_is_reproducible() {
    let args = ["--sessions", "3", "--mode", "stochastic", "--seed", "17"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(
        simulate(a.path(), "SunnyBot", &args),
        simulate(b.path(), "SunnyBot", &args)
    );
    for file in ["benedetta/SunnyBot.json", "benedetta/SunnyBot.log.jsonl"] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"{"user_id": "x", "answers": {"hobby": "chess"}}"#,
    )
    .unwrap();
    let store = dir.path().join("store");
    let store = store.to_str().unwrap();
    for args in [
        vec![
            "simulate",
            "--robot",
            "SunnyBot",
            "--store",
            store,
            "--script",
            script.to_str().unwrap(),
        ],
        vec!["simulate", "--robot", "Marvin", "--store", store],
        vec![
            "simulate",
            "--robot",
            "SunnyBot",
            "--store",
            store,
            "--threshold",
            "1.5",
        ],
        vec![
            "simulate",
            "--robot",
            "SunnyBot",
            "--store",
            store,
            "--mode",
            "sometimes",
        ],
    ] {
        let out = robomem(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn stats_writes_the_frequency_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stats.csv");
    stdout(&robomem(&[
        "stats",
        "--trials",
        "2000",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]));
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["robot", "family", "valence", "expected", "observed", "trials"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 30);
    let cell = |robot: &str, family: &str, valence: &str| {
        rows.iter()
            .find(|r| r[0] == *robot && r[1] == *family && r[2] == *valence)
            .unwrap_or_else(|| panic!("no cell {robot}/{family}/{valence}"))
    };
    assert_eq!(&cell("RoboTech", "topic", "")[4], "1.0000");
    assert_eq!(&cell("MindStorm", "emotion", "negative")[4], "1.0000");
    for row in &rows {
        assert_eq!(&row[5], "2000");
        let expected: f64 = row[3].parse().unwrap();
        let observed: f64 = row[4].parse().unwrap();
        assert!((expected - observed).abs() <= 0.05, "{row:?}");
    }
}

#[test]
fn stats_to_stdout_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stats.csv");
    let printed = stdout(&robomem(&["stats", "--trials", "50", "--seed", "9"]));
    stdout(&robomem(&[
        "stats",
        "--trials",
        "50",
        "--seed",
        "9",
        "--out",
        path.to_str().unwrap(),
    ]));
    assert_eq!(printed, std::fs::read_to_string(&path).unwrap());
    assert!(!robomem(&["stats", "--trials", "0"]).status.success());
}

#[test]
fn replay_reports_identical_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    simulate(
        dir.path(),
        "SunnyBot",
        &["--mode", "stochastic", "--seed", "5"],
    );
    let log = dir.path().join("benedetta/SunnyBot.log.jsonl");
    let log_arg = log.to_str().unwrap();
    assert_eq!(
        stdout(&robomem(&["replay", "--transcript", log_arg])).trim(),
        "identical"
    );

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let target = lines
        .iter()
        .rposition(|l| l["speaker"] == "robot" && l["session_index"] == 2)
        .unwrap();
    let turn = lines[target]["turn"].as_u64().unwrap();
    lines[target]["text"] = "Goodbye forever.".into();
    let edited: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&log, &edited).unwrap();
    let out = robomem(&["replay", "--transcript", log_arg]);
    assert_eq!(out.status.code(), Some(2));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains(&format!("at turn {turn}")), "{report}");

    lines[target].as_object_mut().unwrap().remove("seed");
    let broken: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&log, broken).unwrap();
    let out = robomem(&["replay", "--transcript", log_arg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}
