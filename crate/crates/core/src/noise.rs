//! Label corruption: random boundary erosion/dilation (Type I) and a
//! simulated biased annotator (Type II).

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::image::LabelMask;
use crate::morphology::{dilate, erode};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseType {
    TypeI,
    TypeII,
}

impl NoiseType {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseType::TypeI => "TypeI",
            NoiseType::TypeII => "TypeII",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasDirection {
    Over,
    Under,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub noise_type: NoiseType,
    /// Fraction of training samples whose labels are replaced.
    pub nol: f64,
    /// Largest Type I erosion/dilation radius.
    pub n_max: usize,
    pub bias_direction: BiasDirection,
    pub bias_radius: usize,
    /// Probability that a Type II label also loses a rectangular region.
    pub dropout_fraction: f64,
    pub noise_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            noise_type: NoiseType::TypeI,
            nol: 0.5,
            n_max: 3,
            bias_direction: BiasDirection::Mixed,
            bias_radius: 2,
            dropout_fraction: 0.3,
            noise_seed: 17,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nol) {
            return Err(Error::InvalidArgument(format!("noise level {} outside [0, 1]", self.nol)));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_fraction) && self.dropout_fraction != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "dropout_fraction {} outside [0, 1]",
                self.dropout_fraction
            )));
        }
        Ok(())
    }

    /// Number of samples corrupted out of `n`.
    pub fn corrupted_count(&self, n: usize) -> usize {
        (self.nol * n as f64).round() as usize
    }
}

fn require_clean(sample: &Sample) -> Result<()> {
    if sample.provenance != Provenance::Clean {
        return Err(Error::InvalidArgument(format!(
            "sample {} is already {}",
            sample.id,
            sample.provenance.as_str()
        )));
    }
    if !sample.pristine_mask.is_binary() {
        return Err(Error::InvalidArgument(format!("sample {} is not binary", sample.id)));
    }
    Ok(())
}

/// Erosion that backs off to smaller radii rather than emptying the mask,
/// finally falling back to a radius-1 dilation.
fn erode_nonempty(mask: &LabelMask, radius: usize) -> Result<LabelMask> {
    for r in (1..=radius).rev() {
        let eroded = erode(mask, r)?;
        if eroded.count(1) > 0 {
            return Ok(eroded);
        }
    }
    dilate(mask, 1)
}

fn apply_morph(mask: &LabelMask, op: MorphOp, radius: usize) -> Result<LabelMask> {
    match op {
        MorphOp::Dilate => dilate(mask, radius),
        MorphOp::Erode => erode_nonempty(mask, radius),
    }
}

/// Type I corruption with a fixed operation and radius.
pub fn corrupt_type1_with(sample: &Sample, op: MorphOp, radius: usize) -> Result<Sample> {
    require_clean(sample)?;
    let mut out = sample.clone();
    out.mask = apply_morph(&sample.pristine_mask, op, radius)?;
    out.provenance = Provenance::CorruptedTypeI;
    Ok(out)
}

/// Erodes or dilates (equal odds) by a radius drawn uniformly from `1..=n_max`.
pub fn corrupt_type1(sample: &Sample, n_max: usize, rng: &mut impl Rng) -> Result<Sample> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let op = if rng.random_bool(0.5) { MorphOp::Erode } else { MorphOp::Dilate };
    let radius = rng.random_range(1..=n_max);
    corrupt_type1_with(sample, op, radius)
}

/// Clears one axis-aligned rectangle centred on a random foreground pixel,
/// sized at 10-25% of the foreground area.
fn drop_rectangle(mask: &mut LabelMask, rng: &mut impl Rng) {
    let fg: Vec<usize> = mask
        .classes()
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == 1).then_some(i))
        .collect();
    if fg.is_empty() {
        return;
    }
    let (h, w) = (mask.height(), mask.width());
    let max_area = ((fg.len() as f64 * 0.25).floor() as usize).max(1);
    let area = (fg.len() as f64 * rng.random_range(0.10..=0.25)).round().clamp(1.0, max_area as f64);
    let aspect: f64 = rng.random_range(0.5..=2.0);
    let mut rh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
    let mut rw = ((area / rh as f64).round() as usize).clamp(1, w);
    while rh * rw > max_area {
        if rh >= rw && rh > 1 {
            rh -= 1;
        } else {
            rw -= 1;
        }
    }
    let centre = fg[rng.random_range(0..fg.len())];
    let (cy, cx) = (centre / w, centre % w);
    let y0 = cy.saturating_sub(rh / 2).min(h - rh);
    let x0 = cx.saturating_sub(rw / 2).min(w - rw);
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            mask.set(y, x, 0);
        }
    }
}

/// Systematic over/under-segmentation, optionally followed by a missing
/// rectangular region.
pub fn corrupt_type2(sample: &Sample, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<Sample> {
    require_clean(sample)?;
    let direction = match cfg.bias_direction {
        BiasDirection::Mixed => {
            if rng.random_bool(0.5) {
                BiasDirection::Over
            } else {
                BiasDirection::Under
            }
        }
        d => d,
    };
    let op = match direction {
        BiasDirection::Under => MorphOp::Erode,
        _ => MorphOp::Dilate,
    };
    let mut mask = apply_morph(&sample.pristine_mask, op, cfg.bias_radius)?;
    if cfg.dropout_fraction > 0.0 && rng.random_bool(cfg.dropout_fraction) {
        drop_rectangle(&mut mask, rng);
    }
    let mut out = sample.clone();
    out.mask = mask;
    out.provenance = Provenance::CorruptedTypeII;
    Ok(out)
}

/// Replaces `round(nol * N)` labels, chosen uniformly by `noise_seed`, with
/// corrupted versions. Per-sample draws depend only on the seed and the id.
pub fn corrupt_dataset(train: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = train.len();
    let count = cfg.corrupted_count(n);
    let mut chosen = vec![false; n];
    let mut pick_rng = rng_for(cfg.noise_seed, "corrupt-select", n as u64);
    for i in index::sample(&mut pick_rng, n, count) {
        chosen[i] = true;
    }
    let mut out = train.clone();
    for (sample, pick) in out.samples.iter_mut().zip(chosen) {
        if !pick {
            continue;
        }
        let mut rng = rng_for(cfg.noise_seed, "corrupt-sample", sample.id);
        *sample = match cfg.noise_type {
            NoiseType::TypeI => corrupt_type1(sample, cfg.n_max, &mut rng)?,
            NoiseType::TypeII => corrupt_type2(sample, cfg, &mut rng)?,
        };
    }
    Ok(out)
}
