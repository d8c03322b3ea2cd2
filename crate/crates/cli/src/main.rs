use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use ueba_cli::{
    cmd_diagnose, cmd_featurize, cmd_score, cmd_stress, cmd_synth, cmd_train, cmd_verify, CliError, PipelineConfig,
    ScoreInput,
};
use ueba_core::features::Role;

#[derive(Parser)]
#[command(name = "ueba", version, about = "Per-role behavioural anomaly detection pipeline")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage seed derives from it.
    #[arg(long, global = true, env = "UEBA_SEED")]
    seed: Option<u64>,
    /// Output directory (file for `score`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Model store directory.
    #[arg(long, global = true, env = "UEBA_STORE")]
    store: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["cm", "ep"])]
    role: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic events and a user-to-role map.
    Synth,
    /// Aggregate events into windows.
    Featurize {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        roles: Option<PathBuf>,
    },
    /// Train and calibrate a role model into the store.
    Train {
        /// windows.csv from `featurize`.
        #[arg(long)]
        features: PathBuf,
    },
    /// Score events (.jsonl) or windows (.csv) as JSON lines.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        roles: Option<PathBuf>,
    },
    /// Run the intensity stress experiment.
    Stress {
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// t-SNE maps and per-feature errors.
    Diagnose {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        stress: Option<PathBuf>,
    },
    /// Check store integrity and model invariants.
    Verify,
}

fn need<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required for this command")))
}

fn print<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serialisable summary"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(role) = &cli.role {
        cfg.role = role.parse::<Role>().map_err(CliError::Config)?;
    }
    match &cli.command {
        Command::Synth => print(&cmd_synth(&cfg, need(&cli.out, "out")?)?),
        Command::Featurize { events, roles } => print(&cmd_featurize(
            &cfg,
            events,
            roles.as_deref(),
            cli.store.as_deref(),
            need(&cli.out, "out")?,
        )?),
        Command::Train { features } => print(&cmd_train(&cfg, features, need(&cli.store, "store")?)?),
        Command::Score { input, roles } => {
            let input = if input.extension().is_some_and(|e| e == "csv") {
                ScoreInput::Windows(input.clone())
            } else {
                ScoreInput::Events {
                    path: input.clone(),
                    roles: roles.clone(),
                }
            };
            print(&cmd_score(need(&cli.store, "store")?, &input, need(&cli.out, "out")?)?)
        }
        Command::Stress { templates } => {
            let s = cmd_stress(
                need(&cli.store, "store")?,
                &cfg,
                templates.as_deref(),
                need(&cli.out, "out")?,
            )?;
            print(&serde_json::json!({ "rows": s.rows, "holdout": s.holdout, "files": s.files }));
        }
        Command::Diagnose { features, stress } => print(&cmd_diagnose(
            need(&cli.store, "store")?,
            &cfg,
            features.as_deref(),
            stress.as_deref(),
            need(&cli.out, "out")?,
        )?),
        Command::Verify => {
            let v = cmd_verify(need(&cli.store, "store")?)?;
            print(&v);
            if !v.ok() {
                let failed: Vec<&str> = v.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
                return Err(CliError::Store(format!("self-checks failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
