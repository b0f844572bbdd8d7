//! Scalar objectives: pixel-summed cross-entropy, soft Dice loss, the L2
//! weight penalty, their weighted combination, and the per-sample corruption
//! score used to rank samples by label reliability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{LabelMask, ProbMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the Dice term.
    pub lambda1: f64,
    /// Weight of the squared L2 norm of the parameters.
    pub lambda2: f64,
    /// Probabilities are clamped to `[prob_clamp, 1 - prob_clamp]` inside logarithms.
    pub prob_clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1e-4,
            prob_clamp: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda1 = {} must be >= 0", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda2 = {} must be >= 0", self.lambda2)));
        }
        validate_clamp(self.prob_clamp)
    }
}

/// A sample id paired with its corruption score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: u64,
    pub score: f64,
}

fn validate_clamp(clamp: f64) -> Result<()> {
    if clamp > 0.0 && clamp < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("prob_clamp = {clamp} must lie in (0, 0.5)")))
    }
}

fn check_shapes(probs: &ProbMap, mask: &LabelMask) -> Result<()> {
    if probs.height() != mask.height() || probs.width() != mask.width() {
        return Err(Error::shape(format!(
            "probabilities are {}x{}, mask is {}x{}",
            probs.height(),
            probs.width(),
            mask.height(),
            mask.width()
        )));
    }
    if probs.num_classes() != mask.num_classes() {
        return Err(Error::shape(format!(
            "probabilities have {} classes, mask has {}",
            probs.num_classes(),
            mask.num_classes()
        )));
    }
    Ok(())
}

#[inline]
fn clamp_prob(p: f64, clamp: f64) -> f64 {
    p.clamp(clamp, 1.0 - clamp)
}

/// `-sum_x log(clamp(p_{g(x)}(x)))`, summed (not averaged) over pixels.
pub fn cross_entropy_loss(probs: &ProbMap, mask: &LabelMask, clamp: f64) -> Result<f64> {
    check_shapes(probs, mask)?;
    validate_clamp(clamp)?;
    let l = probs.num_classes();
    let p = probs.probs();
    Ok(mask
        .classes()
        .iter()
        .enumerate()
        .map(|(i, &c)| -clamp_prob(p[i * l + c as usize], clamp).ln())
        .sum())
}

/// Corruption score of a sample: the cross-entropy of the given label under
/// the predicted probabilities. Lower means more likely clean.
pub fn corruption_score(probs: &ProbMap, mask: &LabelMask, clamp: f64) -> Result<f64> {
    cross_entropy_loss(probs, mask, clamp)
}

/// Per-class soft Dice statistics: (intersection, sum p^2, sum g^2).
fn dice_stats(probs: &ProbMap, mask: &LabelMask) -> Vec<(f64, f64, f64)> {
    let l = probs.num_classes();
    let p = probs.probs();
    let mut stats = vec![(0.0, 0.0, 0.0); l];
    for (i, &c) in mask.classes().iter().enumerate() {
        for (class, s) in stats.iter_mut().enumerate() {
            let pv = p[i * l + class];
            s.1 += pv * pv;
            if class == c as usize {
                s.0 += pv;
                s.2 += 1.0;
            }
        }
    }
    stats
}

/// `1 - mean_l 2*sum(p_l g_l) / (sum p_l^2 + sum g_l^2)` over all classes,
/// using soft probabilities. A class absent from both prediction and label
/// contributes a term of 1.
pub fn dice_loss(probs: &ProbMap, mask: &LabelMask) -> Result<f64> {
    check_shapes(probs, mask)?;
    let stats = dice_stats(probs, mask);
    let k = stats.len() as f64;
    let mean: f64 = stats
        .iter()
        .map(|&(inter, pp, gg)| {
            let denom = pp + gg;
            if denom == 0.0 {
                1.0
            } else {
                2.0 * inter / denom
            }
        })
        .sum::<f64>()
        / k;
    Ok(1.0 - mean)
}

/// Squared L2 norm of a parameter vector.
pub fn l2_penalty(params: &[f64]) -> f64 {
    params.iter().map(|w| w * w).sum()
}

/// `CE + lambda1 * Dice + lambda2 * ||W||^2`.
pub fn total_loss(probs: &ProbMap, mask: &LabelMask, params: &[f64], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let ce = cross_entropy_loss(probs, mask, cfg.prob_clamp)?;
    let dice = dice_loss(probs, mask)?;
    Ok(ce + cfg.lambda1 * dice + cfg.lambda2 * l2_penalty(params))
}

/// Data terms of the loss (without the weight penalty) and their gradient
/// with respect to every probability, laid out like `probs.probs()`.
pub(crate) fn data_loss_and_prob_grad(
    probs: &ProbMap,
    mask: &LabelMask,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(probs, mask)?;
    let l = probs.num_classes();
    let p = probs.probs();
    let clamp = cfg.prob_clamp;
    let mut grad = vec![0.0; p.len()];

    let ce = cross_entropy_loss(probs, mask, clamp)?;
    for (i, &c) in mask.classes().iter().enumerate() {
        let idx = i * l + c as usize;
        let pv = p[idx];
        // the clamp is flat outside (clamp, 1 - clamp)
        if pv > clamp && pv < 1.0 - clamp {
            grad[idx] -= 1.0 / pv;
        }
    }

    let dice = dice_loss(probs, mask)?;
    if cfg.lambda1 != 0.0 {
        let stats = dice_stats(probs, mask);
        let k = l as f64;
        for (i, &c) in mask.classes().iter().enumerate() {
            for (class, &(inter, pp, gg)) in stats.iter().enumerate() {
                let denom = pp + gg;
                if denom == 0.0 {
                    continue;
                }
                let g = if class == c as usize { 1.0 } else { 0.0 };
                let pv = p[i * l + class];
                let d_ratio = 2.0 * (g * denom - inter * 2.0 * pv) / (denom * denom);
                grad[i * l + class] -= cfg.lambda1 * d_ratio / k;
            }
        }
    }
    Ok((ce + cfg.lambda1 * dice, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_probs(p1: &[f64]) -> ProbMap {
        let probs = p1.iter().flat_map(|&p| [1.0 - p, p]).collect();
        ProbMap::new(2, 2, 2, probs).unwrap()
    }

    #[test]
    fn cross_entropy_hand_value() {
        let probs = ProbMap::new(2, 2, 2, vec![0.9, 0.1, 0.8, 0.2, 0.6, 0.4, 0.5, 0.5]).unwrap();
        let mask = LabelMask::zeros(2, 2, 2);
        let expected = -(0.9f64.ln() + 0.8f64.ln() + 0.6f64.ln() + 0.5f64.ln());
        let got = cross_entropy_loss(&probs, &mask, 1e-7).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 1.5325).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_perfect_and_uniform() {
        let mask = LabelMask::new(2, 2, 3, vec![0, 1, 2, 1]).unwrap();
        let clamp = 1e-7;
        let perfect = cross_entropy_loss(&ProbMap::one_hot(&mask), &mask, clamp).unwrap();
        assert!((perfect - (-4.0 * (1.0 - clamp).ln())).abs() < 1e-15);
        let uniform = cross_entropy_loss(&ProbMap::uniform(2, 2, 3), &mask, clamp).unwrap();
        assert!((uniform - 4.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn corruption_score_is_cross_entropy() {
        let probs = binary_probs(&[0.2, 0.7, 0.9, 0.4]);
        let mask = LabelMask::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
        assert_eq!(
            corruption_score(&probs, &mask, 1e-7).unwrap().to_bits(),
            cross_entropy_loss(&probs, &mask, 1e-7).unwrap().to_bits()
        );
    }

    #[test]
    fn argmax_mask_minimizes_score() {
        let probs = binary_probs(&[0.2, 0.7, 0.9, 0.4]);
        let best = corruption_score(&probs, &probs.argmax(), 1e-7).unwrap();
        for bits in 0u8..16 {
            let mask = LabelMask::new(2, 2, 2, (0..4).map(|i| (bits >> i) & 1).collect()).unwrap();
            assert!(corruption_score(&probs, &mask, 1e-7).unwrap() >= best);
        }
    }

    #[test]
    fn dice_loss_reference_values() {
        let mask = LabelMask::new(2, 2, 2, vec![0, 1, 0, 0]).unwrap();
        assert_eq!(dice_loss(&ProbMap::one_hot(&mask), &mask).unwrap(), 0.0);

        let complement = LabelMask::new(2, 2, 2, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(dice_loss(&ProbMap::one_hot(&complement), &mask).unwrap(), 1.0);

        // class 1: 2*0.5 / (1 + 1) = 0.5; class 0: 2*1.5 / (1 + 3) = 0.75
        let half = binary_probs(&[0.5; 4]);
        assert!((dice_loss(&half, &mask).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn dice_absent_class_counts_as_agreement() {
        let mask = LabelMask::new(2, 2, 3, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(dice_loss(&ProbMap::one_hot(&mask), &mask).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_terms() {
        let probs = binary_probs(&[0.2, 0.7, 0.9, 0.4]);
        let mask = LabelMask::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
        let params = vec![0.5, -1.0, 2.0];
        let plain = LossConfig { lambda1: 0.0, lambda2: 0.0, prob_clamp: 1e-7 };
        assert_eq!(
            total_loss(&probs, &mask, &params, &plain).unwrap(),
            cross_entropy_loss(&probs, &mask, 1e-7).unwrap()
        );
        let cfg = LossConfig { lambda1: 0.7, lambda2: 0.01, prob_clamp: 1e-7 };
        let base = total_loss(&probs, &mask, &params, &cfg).unwrap();
        let doubled: Vec<f64> = params.iter().map(|w| 2.0 * w).collect();
        let scaled = total_loss(&probs, &mask, &doubled, &cfg).unwrap();
        let penalty = 0.01 * l2_penalty(&params);
        assert!(((scaled - base) - 3.0 * penalty).abs() < 1e-12);

        let perfect = total_loss(&ProbMap::one_hot(&mask), &mask, &[0.0; 3], &cfg).unwrap();
        assert!(perfect < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let probs = ProbMap::uniform(2, 2, 2);
        let mask = LabelMask::zeros(2, 3, 2);
        assert!(cross_entropy_loss(&probs, &mask, 1e-7).is_err());
        assert!(dice_loss(&probs, &mask).is_err());
    }

    #[test]
    fn prob_gradient_matches_finite_differences() {
        let p1 = [0.2, 0.7, 0.9, 0.4];
        let mask = LabelMask::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
        let cfg = LossConfig { lambda1: 1.3, lambda2: 0.0, prob_clamp: 1e-7 };
        let probs = binary_probs(&p1);
        let (_, grad) = data_loss_and_prob_grad(&probs, &mask, &cfg).unwrap();
        let h = 1e-6;
        for idx in 0..8 {
            let eval = |delta: f64| {
                let mut raw = probs.probs().to_vec();
                raw[idx] += delta;
                let pm = ProbMap::from_raw(2, 2, 2, raw);
                cross_entropy_loss(&pm, &mask, 1e-7).unwrap() + cfg.lambda1 * dice_loss(&pm, &mask).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - grad[idx]).abs() < 1e-5, "idx {idx}: fd {fd} vs {}", grad[idx]);
        }
    }
}
