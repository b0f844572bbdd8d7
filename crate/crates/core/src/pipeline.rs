//! File-mediated pipeline stages and the full experiment runner. Each stage
//! reads only documented files (manifests, checkpoints), writes its outputs
//! into its own directory and leaves a `run_metadata.json` there with the
//! resolved configuration and SHA-256 hashes of its inputs and outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{cell_name, CellConfig, RunConfig, NUM_CLASSES};
use crate::correction::{build_updated_dataset, retrain_final, CorrectionReport};
use crate::cotrain::{cotrain, EpochTrace, PeerPair};
use crate::data::{make_corpus, read_manifest, write_manifest, Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{read_checkpoint, write_checkpoint, ModelParams};
use crate::noise::{corrupt_dataset, NoiseType};
use crate::objectives::ScoredSample;
use crate::report::{
    emit_reports, write_cotrain_trace, write_curve, write_json, write_overlays, write_score_histograms, write_scores,
    CellArtifacts, CurveSeries, ResultRow,
};
use crate::train::{SingleEpoch, TrainConfig};

pub const METADATA_FILE: &str = "run_metadata.json";
pub const TRAIN_MANIFEST: &str = "train.jsonl";
pub const TEST_MANIFEST: &str = "test.jsonl";
pub const NOISY_MANIFEST: &str = "noisy.jsonl";
pub const UPDATED_MANIFEST: &str = "updated.jsonl";
pub const PEER_CHECKPOINTS: [&str; 2] = ["peer1.ckpt", "peer2.ckpt"];
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

fn stage_err(stage: &str, detail: impl Into<String>) -> Error {
    Error::Stage {
        stage: stage.into(),
        detail: detail.into(),
    }
}

/// Runs `body`, attaching the stage name to any error it returns.
fn staged<T>(stage: &str, body: impl FnOnce() -> Result<T>) -> Result<T> {
    body().map_err(|e| match e {
        Error::Stage { .. } => e,
        other => stage_err(stage, other.to_string()),
    })
}

fn require_input(stage: &str, path: &Path, producer: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(stage_err(
            stage,
            format!("missing input {}; run `{producer}` first", path.display()),
        ))
    }
}

/// Creates `out`, refusing to reuse a non-empty directory unless `force`,
/// in which case its previous contents are removed.
fn prepare_out(stage: &str, out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let occupied = fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some();
        if occupied {
            if !force {
                return Err(stage_err(
                    stage,
                    format!("output {} already exists and is not empty; pass --force to replace it", out.display()),
                ));
            }
            fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.strip_prefix(root).map(|p| p != Path::new(METADATA_FILE)).unwrap_or(true) {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 of every file under `dir` except the metadata file, keyed by
/// `/`-separated relative path.
pub fn hash_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap_or(p);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((key, hash_file(p)?))
        })
        .collect()
}

#[derive(Serialize)]
struct Metadata<'a> {
    stage: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    cell: Option<&'a CellConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    training: Option<&'a TrainConfig>,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
}

fn write_metadata(
    out: &Path,
    stage: &str,
    cfg: &RunConfig,
    cell: Option<&CellConfig>,
    training: Option<&TrainConfig>,
    inputs: &[(&str, &Path)],
) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|(name, path)| Ok((name.to_string(), hash_file(path)?)))
        .collect::<Result<_>>()?;
    let meta = Metadata {
        stage,
        config: cfg,
        cell,
        training,
        inputs,
        artifacts: hash_tree(out)?,
    };
    write_json(&out.join(METADATA_FILE), &meta)
}

fn read_train(path: &Path) -> Result<Dataset> {
    read_manifest(path, Split::Train, NUM_CLASSES)
}

/// Writes the clean corpus: `train.jsonl` and `test.jsonl` with their PGMs.
pub fn generate(cfg: &RunConfig, out: &Path, force: bool) -> Result<(Dataset, Dataset)> {
    const STAGE: &str = "generate";
    staged(STAGE, || {
        cfg.validate()?;
        prepare_out(STAGE, out, force)?;
        let c = &cfg.corpus;
        let (train, test) = make_corpus(cfg.seed, c.n_train, c.n_test, c.size, &c.scene)?;
        write_manifest(out.join(TRAIN_MANIFEST), &train)?;
        write_manifest(out.join(TEST_MANIFEST), &test)?;
        let cell = cfg.default_cell()?;
        write_metadata(out, STAGE, cfg, Some(&cell), None, &[])?;
        Ok((train, test))
    })
}

/// Corrupts the clean training manifest into `noisy.jsonl`.
pub fn corrupt(cfg: &RunConfig, cell: &CellConfig, clean_train: &Path, out: &Path, force: bool) -> Result<Dataset> {
    const STAGE: &str = "corrupt";
    require_input(STAGE, clean_train, "generate")?;
    staged(STAGE, || {
        let clean = read_train(clean_train)?;
        prepare_out(STAGE, out, force)?;
        let noisy = corrupt_dataset(&clean, &cell.noise)?;
        write_manifest(out.join(NOISY_MANIFEST), &noisy)?;
        write_metadata(out, STAGE, cfg, Some(cell), None, &[("train", clean_train)])?;
        Ok(noisy)
    })
}

/// Co-trains a fresh peer pair and writes both checkpoints and the trace.
pub fn cotrain_stage(
    cfg: &RunConfig,
    cell: &CellConfig,
    train_manifest: &Path,
    out: &Path,
    force: bool,
) -> Result<(PeerPair, Vec<EpochTrace>)> {
    const STAGE: &str = "cotrain";
    require_input(STAGE, train_manifest, "corrupt")?;
    staged(STAGE, || {
        let train = read_train(train_manifest)?;
        prepare_out(STAGE, out, force)?;
        let (pair, traces) = cotrain(&cfg.model_spec(), &train, &cell.peers)?;
        for (net, name) in pair.nets.iter().zip(PEER_CHECKPOINTS) {
            write_checkpoint(out.join(name), net)?;
        }
        write_cotrain_trace(&out.join("cotrain_trace.csv"), &traces)?;
        write_metadata(out, STAGE, cfg, Some(cell), None, &[("train", train_manifest)])?;
        Ok((pair, traces))
    })
}

/// Result of the correction stage.
#[derive(Clone, Debug)]
pub struct Correction {
    pub noisy: Dataset,
    pub updated: Dataset,
    pub report: CorrectionReport,
    pub scores: Vec<ScoredSample>,
}

/// Scores, flags and corrects the training set with trained peers, writing
/// `updated.jsonl`, the report, score tables, histograms and overlays.
pub fn correct(
    cfg: &RunConfig,
    cell: &CellConfig,
    train_manifest: &Path,
    peers_dir: &Path,
    out: &Path,
    force: bool,
) -> Result<Correction> {
    const STAGE: &str = "correct";
    require_input(STAGE, train_manifest, "corrupt")?;
    let ckpts = PEER_CHECKPOINTS.map(|n| peers_dir.join(n));
    for c in &ckpts {
        require_input(STAGE, c, "cotrain")?;
    }
    staged(STAGE, || {
        let spec = cfg.model_spec();
        let noisy = read_train(train_manifest)?;
        let pair = PeerPair::new(read_checkpoint(&ckpts[0], &spec)?, read_checkpoint(&ckpts[1], &spec)?)?;
        prepare_out(STAGE, out, force)?;
        let (updated, report, scores) =
            build_updated_dataset(&noisy, &pair, cell.noisy_fraction, cell.peers.prob_clamp)?;
        write_manifest(out.join(UPDATED_MANIFEST), &updated)?;
        write_json(&out.join("correction_report.json"), &report)?;
        write_scores(&out.join("scores.csv"), &scores, &noisy)?;
        write_score_histograms(out, &scores, &noisy)?;
        write_overlays(&out.join("overlays"), &noisy, &updated, &report)?;
        write_metadata(
            out,
            STAGE,
            cfg,
            Some(cell),
            None,
            &[("train", train_manifest), ("peer1", &ckpts[0]), ("peer2", &ckpts[1])],
        )?;
        Ok(Correction {
            noisy,
            updated,
            report,
            scores,
        })
    })
}

/// Trains a fresh single network on a manifest and writes `final.ckpt` and
/// `curve.csv`. Used for the final network and for both baselines.
pub fn retrain(
    cfg: &RunConfig,
    training: &TrainConfig,
    train_manifest: &Path,
    out: &Path,
    force: bool,
) -> Result<(ModelParams, Vec<SingleEpoch>)> {
    const STAGE: &str = "retrain";
    require_input(STAGE, train_manifest, "correct")?;
    staged(STAGE, || {
        let train = read_train(train_manifest)?;
        prepare_out(STAGE, out, force)?;
        let (params, history) = retrain_final(&cfg.model_spec(), &train, training)?;
        write_checkpoint(out.join(FINAL_CHECKPOINT), &params)?;
        write_curve(&out.join("curve.csv"), &history)?;
        write_metadata(out, STAGE, cfg, None, Some(training), &[("train", train_manifest)])?;
        Ok((params, history))
    })
}

/// Test-set accuracy and Dice of a checkpoint.
pub fn evaluate_stage(cfg: &RunConfig, checkpoint: &Path, test_manifest: &Path) -> Result<EvalResult> {
    const STAGE: &str = "evaluate";
    require_input(STAGE, checkpoint, "retrain")?;
    require_input(STAGE, test_manifest, "generate")?;
    staged(STAGE, || {
        let params = read_checkpoint(checkpoint, &cfg.model_spec())?;
        let test = read_manifest(test_manifest, Split::Test, NUM_CLASSES)?;
        evaluate(&params, &test)
    })
}

/// Outcome of one grid cell.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub name: String,
    pub noise_type: NoiseType,
    pub nol: f64,
    pub config: CellConfig,
    pub coseg: EvalResult,
    pub noisy_baseline: EvalResult,
    pub coseg_history: Vec<SingleEpoch>,
    pub noisy_history: Vec<SingleEpoch>,
    pub cotrain: Vec<EpochTrace>,
    pub correction: Correction,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub clean_baseline: EvalResult,
    pub clean_history: Vec<SingleEpoch>,
    pub cells: Vec<CellOutcome>,
}

fn run_cell(cfg: &RunConfig, cell: &CellConfig, corpus: &Path, dir: &Path) -> Result<CellOutcome> {
    let test = corpus.join(TEST_MANIFEST);
    let noisy_dir = dir.join("noisy");
    corrupt(cfg, cell, &corpus.join(TRAIN_MANIFEST), &noisy_dir, false)?;
    let noisy_manifest = noisy_dir.join(NOISY_MANIFEST);

    let baseline_dir = dir.join("baseline_noisy");
    let (_, noisy_history) = retrain(cfg, &cell.final_train, &noisy_manifest, &baseline_dir, false)?;
    let noisy_baseline = evaluate_stage(cfg, &baseline_dir.join(FINAL_CHECKPOINT), &test)?;
    write_json(&baseline_dir.join("eval.json"), &noisy_baseline)?;

    let peers_dir = dir.join("cotrain");
    let (_, traces) = cotrain_stage(cfg, cell, &noisy_manifest, &peers_dir, false)?;
    let correct_dir = dir.join("correct");
    let correction = correct(cfg, cell, &noisy_manifest, &peers_dir, &correct_dir, false)?;

    let final_dir = dir.join("final");
    let (_, coseg_history) = retrain(cfg, &cell.final_train, &correct_dir.join(UPDATED_MANIFEST), &final_dir, false)?;
    let coseg = evaluate_stage(cfg, &final_dir.join(FINAL_CHECKPOINT), &test)?;
    write_json(&final_dir.join("eval.json"), &coseg)?;

    Ok(CellOutcome {
        name: cell_name(cell.noise.noise_type, cell.noise.nol),
        noise_type: cell.noise.noise_type,
        nol: cell.noise.nol,
        config: cell.clone(),
        coseg,
        noisy_baseline,
        coseg_history,
        noisy_history,
        cotrain: traces,
        correction,
    })
}

/// The whole experiment: corpus, clean baseline, then for every grid cell
/// corruption, noisy baseline, co-training, correction, retraining and
/// evaluation, followed by the combined reports.
pub fn run_all(cfg: &RunConfig, out: &Path, force: bool) -> Result<RunSummary> {
    const STAGE: &str = "run-all";
    cfg.validate().map_err(|e| stage_err(STAGE, e.to_string()))?;
    let cells = cfg.grid_cells().map_err(|e| stage_err(STAGE, e.to_string()))?;
    prepare_out(STAGE, out, force)?;

    let corpus = out.join("corpus");
    generate(cfg, &corpus, false)?;
    let test = corpus.join(TEST_MANIFEST);
    let clean_dir = out.join("baseline_clean");
    let (_, clean_history) = retrain(cfg, &cfg.final_train, &corpus.join(TRAIN_MANIFEST), &clean_dir, false)?;
    let clean_baseline = evaluate_stage(cfg, &clean_dir.join(FINAL_CHECKPOINT), &test)?;
    write_json(&clean_dir.join("eval.json"), &clean_baseline)?;

    let mut outcomes = Vec::with_capacity(cells.len());
    for cell in &cells {
        let name = cell_name(cell.noise.noise_type, cell.noise.nol);
        outcomes.push(run_cell(cfg, cell, &corpus, &out.join("cells").join(&name))?);
    }

    staged(STAGE, || {
        let mut curves = vec![CurveSeries {
            series: "clean_baseline".into(),
            noise_type: "none".into(),
            nol: 0.0,
            history: clean_history.clone(),
        }];
        let mut table = vec![ResultRow {
            noise_type: "none".into(),
            nol: 0.0,
            acc: clean_baseline.acc,
            dic: clean_baseline.dic,
            noisy_baseline: None,
        }];
        let mut artifacts = Vec::with_capacity(outcomes.len());
        for o in &outcomes {
            for (series, history) in [("noisy_baseline", &o.noisy_history), ("coseg_final", &o.coseg_history)] {
                curves.push(CurveSeries {
                    series: series.into(),
                    noise_type: o.noise_type.as_str().into(),
                    nol: o.nol,
                    history: history.clone(),
                });
            }
            table.push(ResultRow {
                noise_type: o.noise_type.as_str().into(),
                nol: o.nol,
                acc: o.coseg.acc,
                dic: o.coseg.dic,
                noisy_baseline: Some(o.noisy_baseline),
            });
            artifacts.push(CellArtifacts {
                name: o.name.clone(),
                noisy: o.correction.noisy.clone(),
                updated: o.correction.updated.clone(),
                scores: o.correction.scores.clone(),
                correction: o.correction.report.clone(),
                cotrain: o.cotrain.clone(),
            });
        }
        emit_reports(out, &curves, &artifacts, &table)?;
        write_metadata(out, STAGE, cfg, None, None, &[])?;
        Ok(())
    })?;

    Ok(RunSummary {
        clean_baseline,
        clean_history,
        cells: outcomes,
    })
}
