//! Command-line front end for the Co-Seg pipeline. Every subcommand prints a
//! JSON result on stdout; failures print `{"error": {...}}` on stderr and
//! exit with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coseg::config::RunConfig;
use coseg::pipeline::{self, FINAL_CHECKPOINT, NOISY_MANIFEST, TRAIN_MANIFEST, UPDATED_MANIFEST};
use coseg::report::write_json;
use coseg::{Error, Result};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "coseg", version, about = "Noisy-label segmentation by co-training and label correction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults are used for absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the clean synthetic corpus (train.jsonl, test.jsonl).
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrupt the training labels of a generated corpus.
    Corrupt {
        /// Directory written by `generate`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Co-train two peer networks on a (noisy) training manifest.
    Cotrain {
        /// Training manifest, usually `noisy.jsonl` from `corrupt`.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flag and correct noisy labels with trained peers.
    Correct {
        #[arg(long)]
        train: PathBuf,
        /// Directory written by `cotrain`.
        #[arg(long)]
        peers: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a fresh final network on a manifest.
    Retrain {
        /// Training manifest, usually `updated.jsonl` from `correct`.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test-set accuracy and Dice of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test manifest from `generate`.
        #[arg(long)]
        test: PathBuf,
        /// Also write the result to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment grid with baselines and reports.
    RunAll {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn done(stage: &str, out: &Path) -> Value {
    json!({ "status": "ok", "stage": stage, "out": out.display().to_string() })
}

fn run(cli: Cli) -> Result<Value> {
    let cfg = load_config(&cli.common)?;
    let force = cli.common.force;
    match cli.command {
        Command::Generate { out } => {
            pipeline::generate(&cfg, &out, force)?;
            Ok(done("generate", &out))
        }
        Command::Corrupt { corpus, out } => {
            pipeline::corrupt(&cfg, &cfg.default_cell()?, &corpus.join(TRAIN_MANIFEST), &out, force)?;
            Ok(json!({ "status": "ok", "stage": "corrupt", "manifest": out.join(NOISY_MANIFEST).display().to_string() }))
        }
        Command::Cotrain { train, out } => {
            pipeline::cotrain_stage(&cfg, &cfg.default_cell()?, &train, &out, force)?;
            Ok(done("cotrain", &out))
        }
        Command::Correct { train, peers, out } => {
            let c = pipeline::correct(&cfg, &cfg.default_cell()?, &train, &peers, &out, force)?;
            Ok(json!({
                "status": "ok",
                "stage": "correct",
                "manifest": out.join(UPDATED_MANIFEST).display().to_string(),
                "flagged": c.report.flagged.len(),
                "dice_before": c.report.dice_before,
                "dice_after": c.report.dice_after,
            }))
        }
        Command::Retrain { train, out } => {
            pipeline::retrain(&cfg, &cfg.default_cell()?.final_train, &train, &out, force)?;
            Ok(json!({ "status": "ok", "stage": "retrain", "checkpoint": out.join(FINAL_CHECKPOINT).display().to_string() }))
        }
        Command::Evaluate { checkpoint, test, out } => {
            let result = pipeline::evaluate_stage(&cfg, &checkpoint, &test)?;
            if let Some(path) = out {
                write_json(&path, &result)?;
            }
            Ok(serde_json::to_value(result)?)
        }
        Command::RunAll { out } => {
            let summary = pipeline::run_all(&cfg, &out, force)?;
            Ok(json!({
                "status": "ok",
                "stage": "run-all",
                "out": out.display().to_string(),
                "clean_baseline": summary.clean_baseline,
                "cells": summary.cells.iter().map(|c| json!({
                    "cell": c.name,
                    "coseg": c.coseg,
                    "noisy_baseline": c.noisy_baseline,
                })).collect::<Vec<_>>(),
            }))
        }
    }
}

fn error_json(e: &Error) -> Value {
    json!({ "error": { "kind": e.kind(), "stage": e.stage(), "message": e.to_string() } })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", json!({ "error": { "kind": "usage", "stage": null, "message": message.trim_end() } }));
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(value) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
