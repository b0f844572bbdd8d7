//! Label correction and retraining. The highest-scoring samples are flagged
//! as noisy; in each flagged mask a pixel is relabelled when both peers
//! predict the same class and that class differs from the stored label.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cotrain::{score_dataset, PeerPair};
use crate::data::{Dataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::image::ProbMap;
use crate::metrics::{dice_coefficient, FOREGROUND};
use crate::model::{forward, ModelParams, ModelSpec};
use crate::objectives::ScoredSample;
use crate::train::{train_fresh, SingleEpoch, TrainConfig};

/// Ids of the `round(noisy_fraction * N)` highest scores; equal scores are
/// flagged in descending id order.
pub fn flag_noisy(scores: &[ScoredSample], noisy_fraction: f64) -> Result<Vec<u64>> {
    if !(0.0..=1.0).contains(&noisy_fraction) {
        return Err(Error::InvalidArgument(format!("noisy_fraction {noisy_fraction} outside [0, 1]")));
    }
    let count = (noisy_fraction * scores.len() as f64).round() as usize;
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(b.id.cmp(&a.id)));
    Ok(ranked.into_iter().take(count).map(|s| s.id).collect())
}

/// Relabels pixels where both peers' argmax agree with each other but not
/// with the current label. Returns the corrected sample and the number of
/// pixels changed.
pub fn vote_correct(sample: &Sample, probs1: &ProbMap, probs2: &ProbMap) -> Result<(Sample, usize)> {
    for p in [probs1, probs2] {
        if !p.matches_mask(&sample.mask) {
            return Err(Error::shape(format!(
                "sample {}: prediction {}x{}x{} does not match mask {}x{}x{}",
                sample.id,
                p.height(),
                p.width(),
                p.num_classes(),
                sample.mask.height(),
                sample.mask.width(),
                sample.mask.num_classes()
            )));
        }
    }
    let a = probs1.argmax();
    let b = probs2.argmax();
    let mut out = sample.clone();
    let mut changed = 0;
    for ((label, &pa), &pb) in out.mask.classes_mut().iter_mut().zip(a.classes()).zip(b.classes()) {
        if pa == pb && pa != *label {
            *label = pa;
            changed += 1;
        }
    }
    out.provenance = Provenance::Corrected;
    Ok((out, changed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub flagged: Vec<u64>,
    /// Pixels relabelled per sample id; zero for every unflagged sample.
    pub pixels_changed: BTreeMap<u64, usize>,
    /// Mean foreground Dice of flagged labels against ground truth.
    pub dice_before: f64,
    pub dice_after: f64,
}

/// Scores, flags and corrects `train` with a trained pair. Unflagged samples
/// are copied verbatim; order and ids are kept.
pub fn build_updated_dataset(
    train: &Dataset,
    pair: &PeerPair,
    noisy_fraction: f64,
    clamp: f64,
) -> Result<(Dataset, CorrectionReport, Vec<ScoredSample>)> {
    let scores = score_dataset(&pair.nets[0], &pair.nets[1], train, clamp)?;
    let flagged = flag_noisy(&scores, noisy_fraction)?;
    let (updated, report) = correct_flagged(train, &pair.nets[0], &pair.nets[1], &flagged)?;
    Ok((updated, report, scores))
}

/// Applies [`vote_correct`] to the samples in `flagged`.
pub fn correct_flagged(
    train: &Dataset,
    net1: &ModelParams,
    net2: &ModelParams,
    flagged: &[u64],
) -> Result<(Dataset, CorrectionReport)> {
    let flag_set: HashSet<u64> = flagged.iter().copied().collect();
    let mut samples = Vec::with_capacity(train.len());
    let mut pixels_changed = BTreeMap::new();
    let (mut before, mut after) = (0.0, 0.0);
    for s in &train.samples {
        if !flag_set.contains(&s.id) {
            pixels_changed.insert(s.id, 0);
            samples.push(s.clone());
            continue;
        }
        let p1 = forward(net1, &s.image)?;
        let p2 = forward(net2, &s.image)?;
        let (corrected, changed) = vote_correct(s, &p1, &p2)?;
        // evaluation only
        before += dice_coefficient(&s.mask, &s.pristine_mask, FOREGROUND)?;
        after += dice_coefficient(&corrected.mask, &corrected.pristine_mask, FOREGROUND)?;
        pixels_changed.insert(s.id, changed);
        samples.push(corrected);
    }
    let n = flag_set.len().max(1) as f64;
    let report = CorrectionReport {
        flagged: flagged.to_vec(),
        pixels_changed,
        dice_before: if flag_set.is_empty() { 1.0 } else { before / n },
        dice_after: if flag_set.is_empty() { 1.0 } else { after / n },
    };
    let updated = Dataset {
        samples,
        ..train.clone()
    };
    Ok((updated, report))
}

/// Trains a freshly initialized network on the whole updated dataset.
pub fn retrain_final(spec: &ModelSpec, updated: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, Vec<SingleEpoch>)> {
    if updated.is_empty() {
        return Err(Error::InvalidArgument("updated dataset is empty".into()));
    }
    train_fresh(spec, updated, cfg)
}
