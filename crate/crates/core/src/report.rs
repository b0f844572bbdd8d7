//! CSV, JSON and PGM artifacts: training curves, co-training traces, score
//! tables with histograms, before/after label overlays and the results table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correction::CorrectionReport;
use crate::cotrain::EpochTrace;
use crate::data::{write_pgm_mask, Dataset, PgmFormat};
use crate::error::{Error, Result};
use crate::metrics::EvalResult;
use crate::morphology::inner_boundary;
use crate::objectives::ScoredSample;
use crate::train::SingleEpoch;

pub const HISTOGRAM_BINS: usize = 32;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Columns: epoch, net, mean_loss, train_acc_vs_pristine, train_dic_vs_pristine.
pub fn write_cotrain_trace(path: &Path, traces: &[EpochTrace]) -> Result<()> {
    let mut out = String::from("epoch,net,mean_loss,train_acc_vs_pristine,train_dic_vs_pristine\n");
    for t in traces {
        for (k, n) in t.nets.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", t.epoch, k + 1, n.mean_loss, n.train_acc, n.train_dic).unwrap();
        }
    }
    write_text(path, &out)
}

/// Columns: epoch, mean_loss, train_acc_vs_pristine, train_dic_vs_pristine.
pub fn write_curve(path: &Path, history: &[SingleEpoch]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss,train_acc_vs_pristine,train_dic_vs_pristine\n");
    for h in history {
        writeln!(out, "{},{},{},{}", h.epoch, h.mean_loss, h.train_acc, h.train_dic).unwrap();
    }
    write_text(path, &out)
}

pub fn read_curve(path: &Path) -> Result<Vec<SingleEpoch>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize| Error::Stage {
        stage: "report".into(),
        detail: format!("{}: malformed curve row {line}", path.display()),
    };
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(i + 1));
            }
            Ok(SingleEpoch {
                epoch: f[0].parse().map_err(|_| bad(i + 1))?,
                mean_loss: f[1].parse().map_err(|_| bad(i + 1))?,
                train_acc: f[2].parse().map_err(|_| bad(i + 1))?,
                train_dic: f[3].parse().map_err(|_| bad(i + 1))?,
            })
        })
        .collect()
}

/// One labelled training curve for the combined curves file.
#[derive(Clone, Debug)]
pub struct CurveSeries {
    /// `clean_baseline`, `noisy_baseline` or `coseg_final`.
    pub series: String,
    pub noise_type: String,
    pub nol: f64,
    pub history: Vec<SingleEpoch>,
}

/// Columns: series, noise_type, nol, epoch, train_acc_vs_pristine, train_dic_vs_pristine.
pub fn write_curves(path: &Path, curves: &[CurveSeries]) -> Result<()> {
    let mut out = String::from("series,noise_type,nol,epoch,train_acc_vs_pristine,train_dic_vs_pristine\n");
    for c in curves {
        for h in &c.history {
            writeln!(out, "{},{},{},{},{},{}", c.series, c.noise_type, c.nol, h.epoch, h.train_acc, h.train_dic).unwrap();
        }
    }
    write_text(path, &out)
}

fn group_of(dataset: &Dataset, id: u64) -> &'static str {
    match dataset.get(id) {
        Some(s) if s.provenance.is_corrupted() => "noisy",
        _ => "clean",
    }
}

/// Columns: id, score, group (clean or noisy by provenance).
pub fn write_scores(path: &Path, scores: &[ScoredSample], dataset: &Dataset) -> Result<()> {
    let mut out = String::from("id,score,group\n");
    for s in scores {
        writeln!(out, "{},{},{}", s.id, s.score, group_of(dataset, s.id)).unwrap();
    }
    write_text(path, &out)
}

/// Counts per equal-width bin over `[lo, hi]`; the top edge falls in the last bin.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let idx = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
        counts[idx.clamp(0, bins as isize - 1) as usize] += 1;
    }
    counts
}

/// `scores_hist_clean.csv` and `scores_hist_noisy.csv` sharing one set of
/// bin edges spanning all scores. Columns: bin, lo, hi, count.
pub fn write_score_histograms(dir: &Path, scores: &[ScoredSample], dataset: &Dataset) -> Result<()> {
    let lo = scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if scores.is_empty() { (0.0, 1.0) } else { (lo, hi) };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    for group in ["clean", "noisy"] {
        let values: Vec<f64> = scores
            .iter()
            .filter(|s| group_of(dataset, s.id) == group)
            .map(|s| s.score)
            .collect();
        let counts = histogram(&values, HISTOGRAM_BINS, lo, hi);
        let mut out = String::from("bin,lo,hi,count\n");
        for (b, c) in counts.iter().enumerate() {
            let edge_lo = lo + width * b as f64;
            let edge_hi = if b + 1 == HISTOGRAM_BINS { hi } else { lo + width * (b + 1) as f64 };
            writeln!(out, "{b},{edge_lo},{edge_hi},{c}").unwrap();
        }
        write_text(&dir.join(format!("scores_hist_{group}.csv")), &out)?;
    }
    Ok(())
}

/// For every flagged sample: the ground-truth boundary, the noisy label and
/// the corrected label, as class-valued PGMs.
pub fn write_overlays(dir: &Path, noisy: &Dataset, updated: &Dataset, report: &CorrectionReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for &id in &report.flagged {
        let (Some(before), Some(after)) = (noisy.get(id), updated.get(id)) else {
            return Err(Error::InvalidArgument(format!("flagged id {id} missing from dataset")));
        };
        write_pgm_mask(
            dir.join(format!("{id}_pristine_boundary.pgm")),
            &inner_boundary(&before.pristine_mask)?,
            PgmFormat::Binary,
        )?;
        write_pgm_mask(dir.join(format!("{id}_noisy.pgm")), &before.mask, PgmFormat::Binary)?;
        write_pgm_mask(dir.join(format!("{id}_corrected.pgm")), &after.mask, PgmFormat::Binary)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// `none` for the noise-free baseline.
    pub noise_type: String,
    pub nol: f64,
    pub acc: f64,
    pub dic: f64,
    pub noisy_baseline: Option<EvalResult>,
}

/// Columns: noise_type, nol, acc, dic, noisy_baseline_acc, noisy_baseline_dic.
pub fn write_results_table(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::from("noise_type,nol,acc,dic,noisy_baseline_acc,noisy_baseline_dic\n");
    for r in rows {
        let (na, nd) = match &r.noisy_baseline {
            Some(e) => (e.acc.to_string(), e.dic.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(out, "{},{},{},{},{na},{nd}", r.noise_type, r.nol, r.acc, r.dic).unwrap();
    }
    write_text(path, &out)
}

/// Everything a finished grid run reports on.
#[derive(Clone, Debug)]
pub struct CellArtifacts {
    pub name: String,
    pub noisy: Dataset,
    pub updated: Dataset,
    pub scores: Vec<ScoredSample>,
    pub correction: CorrectionReport,
    pub cotrain: Vec<EpochTrace>,
}

/// Writes the combined curves and results table at the top of `out_dir`, and
/// per-cell score tables, histograms, overlays and traces under
/// `out_dir/reports/<cell>/`.
pub fn emit_reports(out_dir: &Path, curves: &[CurveSeries], cells: &[CellArtifacts], table: &[ResultRow]) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_curves(&out_dir.join("curves.csv"), curves)?;
    write_results_table(&out_dir.join("results_table.csv"), table)?;
    for cell in cells {
        let dir = out_dir.join("reports").join(&cell.name);
        write_cotrain_trace(&dir.join("cotrain_trace.csv"), &cell.cotrain)?;
        write_scores(&dir.join("scores.csv"), &cell.scores, &cell.noisy)?;
        write_score_histograms(&dir, &cell.scores, &cell.noisy)?;
        write_json(&dir.join("correction_report.json"), &cell.correction)?;
        write_overlays(&dir.join("overlays"), &cell.noisy, &cell.updated, &cell.correction)?;
    }
    Ok(())
}
