use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::LabelMask;
use crate::model::{forward, ModelParams};

/// Foreground class for binary tasks.
pub const FOREGROUND: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub acc: f64,
    pub dic: f64,
    pub n_samples: usize,
}

fn check(pred: &LabelMask, truth: &LabelMask) -> Result<()> {
    if pred.same_shape(truth) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.height(),
            pred.width(),
            truth.height(),
            truth.width()
        )))
    }
}

/// Fraction of pixels with identical labels.
pub fn pixel_accuracy(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    check(pred, truth)?;
    let same = pred.len() - pred.hamming(truth);
    Ok(same as f64 / pred.len() as f64)
}

/// Hard Dice `2|P∩T| / (|P| + |T|)` for class `cls`; 1 when both are empty.
pub fn dice_coefficient(pred: &LabelMask, truth: &LabelMask, cls: u8) -> Result<f64> {
    check(pred, truth)?;
    let (mut inter, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.classes().iter().zip(truth.classes()) {
        let (ia, ib) = (a == cls, b == cls);
        p += ia as usize;
        t += ib as usize;
        inter += (ia && ib) as usize;
    }
    if p + t == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + t) as f64)
}

/// Mean accuracy and foreground Dice of `preds` against `truths`.
pub fn mean_scores<'a>(pairs: impl IntoIterator<Item = (&'a LabelMask, &'a LabelMask)>) -> Result<EvalResult> {
    let (mut acc, mut dic, mut n) = (0.0, 0.0, 0usize);
    for (pred, truth) in pairs {
        acc += pixel_accuracy(pred, truth)?;
        dic += dice_coefficient(pred, truth, FOREGROUND)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot evaluate an empty set".into()));
    }
    Ok(EvalResult {
        acc: acc / n as f64,
        dic: dic / n as f64,
        n_samples: n,
    })
}

/// Argmax predictions of `params` scored against every sample's ground
/// truth.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<EvalResult> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let preds = dataset
        .samples
        .iter()
        .map(|s| forward(params, &s.image).map(|p| p.argmax()))
        .collect::<Result<Vec<_>>>()?;
    mean_scores(preds.iter().zip(dataset.samples.iter().map(|s| &s.pristine_mask)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> LabelMask {
        LabelMask::new(2, bits.len() / 2, 2, bits.to_vec()).unwrap()
    }

    #[test]
    fn accuracy_counts() {
        let a = mask(&[0, 1, 1, 0]);
        assert_eq!(pixel_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(pixel_accuracy(&a, &mask(&[1, 0, 0, 1])).unwrap(), 0.0);
        assert_eq!(pixel_accuracy(&a, &mask(&[0, 1, 1, 1])).unwrap(), 0.75);
    }

    #[test]
    fn dice_counts() {
        let a = mask(&[0, 1, 1, 0]);
        assert_eq!(dice_coefficient(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(dice_coefficient(&a, &mask(&[1, 0, 0, 1]), 1).unwrap(), 0.0);
        // |P| = 2, |T| = 4, overlap 2
        let p = mask(&[1, 1, 0, 0, 0, 0]);
        let t = mask(&[1, 1, 1, 1, 0, 0]);
        assert!((dice_coefficient(&p, &t, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let empty = mask(&[0, 0, 0, 0]);
        assert_eq!(dice_coefficient(&empty, &empty, 1).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(pixel_accuracy(&mask(&[0, 1, 1, 0]), &mask(&[0, 1, 1, 0, 0, 0])).is_err());
        assert!(dice_coefficient(&mask(&[0, 1, 1, 0]), &mask(&[0, 1, 1, 0, 0, 0]), 1).is_err());
    }
}
