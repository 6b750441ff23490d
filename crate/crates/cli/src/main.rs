use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use robomem_core::dialogue::DialogueEngine;
use robomem_core::persona::RobotId;
use robomem_core::recall::{RecallConfig, RecallMode, DEFAULT_THRESHOLD};
use robomem_core::sim::{replay_file, simulate, stats, write_stats_csv, UserScript};
use robomem_core::store::{encode_model, JsonFileStore};

/// Drives scripted users through robot conversations without a server.
#[derive(Debug, Parser)]
#[command(name = "robomem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run consecutive sessions of a user script against one robot.
    Simulate {
        #[arg(long)]
        robot: RobotId,
        /// User script; the built-in canonical user when omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        sessions: u32,
        #[arg(long, default_value = "threshold")]
        mode: RecallMode,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving model documents and transcripts.
        #[arg(long)]
        store: PathBuf,
    },
    /// Empirical stochastic recall frequency of every probability cell.
    Stats {
        #[arg(long, default_value_t = 10_000)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a transcript and check every robot turn is reproduced.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
    },
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate {
            robot,
            script,
            sessions,
            mode,
            threshold,
            seed,
            store,
        } => {
            let script = match script {
                Some(path) => UserScript::load(&path)
                    .with_context(|| format!("cannot use script {}", path.display()))?,
                None => UserScript::canonical(),
            };
            let config = RecallConfig {
                mode,
                threshold,
                seed,
            };
            config.validate()?;
            let engine = DialogueEngine::new(Arc::new(JsonFileStore::new(&store)));
            let (runs, model) = simulate(&engine, robot, &script, sessions, config)?;
            let mut out = io::stdout().lock();
            for run in &runs {
                let acts: Vec<String> = run.acts.iter().map(ToString::to_string).collect();
                writeln!(out, "{}: {}", run.session_id, acts.join(" "))?;
            }
            writeln!(out, "{}", encode_model(&model))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { trials, seed, out } => {
            anyhow::ensure!(trials >= 1, "--trials must be at least 1");
            let rows = stats(trials, seed)?;
            match out {
                Some(path) => {
                    let file = File::create(&path)
                        .with_context(|| format!("cannot create {}", path.display()))?;
                    write_stats_csv(&rows, BufWriter::new(file))?;
                }
                None => write_stats_csv(&rows, io::stdout().lock())?,
            }
            let worst = rows
                .iter()
                .map(|r| (r.observed - r.expected).abs())
                .fold(0.0, f64::max);
            eprintln!("{} cells, largest deviation {worst:.4}", rows.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { transcript } => {
            let report = replay_file(&transcript)
                .with_context(|| format!("cannot replay {}", transcript.display()))?;
            println!("{report}");
            Ok(if report.is_identical() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}
