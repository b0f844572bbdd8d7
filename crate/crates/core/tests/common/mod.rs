//! Independent reference implementations shared by the integration tests.
//! They are deliberately naive: explicit loops over rows, columns and
//! structuring-element offsets, with no code shared with the library.

#![allow(dead_code)]

use coseg::model::{init_model, loss_and_grad};
use coseg::{GrayImage, LabelMask, LossConfig, ModelSpec, ProbMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize, classes: usize) -> LabelMask {
    let labels = (0..h * w).map(|_| rng.random_range(0..classes as u8)).collect();
    LabelMask::new(h, w, classes, labels).unwrap()
}

/// Per-pixel probabilities from random positive weights, occasionally with
/// exact zeros so the clamp is exercised.
pub fn random_probs(rng: &mut impl Rng, h: usize, w: usize, classes: usize) -> ProbMap {
    let mut probs = Vec::with_capacity(h * w * classes);
    for _ in 0..h * w {
        let mut weights: Vec<f64> = (0..classes)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        if weights.iter().all(|&v| v == 0.0) {
            weights[0] = 1.0;
        }
        let total: f64 = weights.iter().sum();
        probs.extend(weights.iter().map(|v| v / total));
    }
    ProbMap::new(h, w, classes, probs).unwrap()
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize) -> GrayImage {
    GrayImage::new(h, w, (0..h * w).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap()
}

pub fn naive_cross_entropy(probs: &ProbMap, mask: &LabelMask, clamp: f64) -> f64 {
    let mut total = 0.0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let p = probs.get(y, x, mask.get(y, x) as usize);
            let p = if p < clamp {
                clamp
            } else if p > 1.0 - clamp {
                1.0 - clamp
            } else {
                p
            };
            total -= p.ln();
        }
    }
    total
}

pub fn naive_dice_loss(probs: &ProbMap, mask: &LabelMask) -> f64 {
    let k = mask.num_classes();
    let mut ratio_sum = 0.0;
    for class in 0..k {
        let (mut inter, mut pp, mut gg) = (0.0, 0.0, 0.0);
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let p = probs.get(y, x, class);
                let g = if mask.get(y, x) as usize == class { 1.0 } else { 0.0 };
                inter += p * g;
                pp += p * p;
                gg += g * g;
            }
        }
        ratio_sum += if pp + gg == 0.0 { 1.0 } else { 2.0 * inter / (pp + gg) };
    }
    1.0 - ratio_sum / k as f64
}

/// Square structuring-element dilation by exhaustive sweep; off-canvas
/// pixels are background.
pub fn brute_dilate(mask: &LabelMask, r: usize) -> LabelMask {
    let (h, w, r) = (mask.height() as i64, mask.width() as i64, r as i64);
    LabelMask::from_fn(mask.height(), mask.width(), |y, x| {
        let (y, x) = (y as i64, x as i64);
        (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (yy, xx) = (y + dy, x + dx);
                yy >= 0 && yy < h && xx >= 0 && xx < w && mask.get(yy as usize, xx as usize) == 1
            })
        })
    })
}

/// Square erosion by exhaustive sweep: every offset must land on foreground
/// inside the canvas.
pub fn brute_erode(mask: &LabelMask, r: usize) -> LabelMask {
    let (h, w, r) = (mask.height() as i64, mask.width() as i64, r as i64);
    LabelMask::from_fn(mask.height(), mask.width(), |y, x| {
        let (y, x) = (y as i64, x as i64);
        (-r..=r).all(|dy| {
            (-r..=r).all(|dx| {
                let (yy, xx) = (y + dy, x + dx);
                yy >= 0 && yy < h && xx >= 0 && xx < w && mask.get(yy as usize, xx as usize) == 1
            })
        })
    })
}

pub fn is_subset(a: &LabelMask, b: &LabelMask) -> bool {
    a.classes().iter().zip(b.classes()).all(|(&x, &y)| x <= y)
}

/// Places `mask` in the middle of a canvas with a `margin`-wide background
/// border.
pub fn pad(mask: &LabelMask, margin: usize) -> LabelMask {
    LabelMask::from_fn(mask.height() + 2 * margin, mask.width() + 2 * margin, |y, x| {
        y >= margin
            && x >= margin
            && y < mask.height() + margin
            && x < mask.width() + margin
            && mask.get(y - margin, x - margin) == 1
    })
}

pub fn crop(mask: &LabelMask, margin: usize, h: usize, w: usize) -> LabelMask {
    LabelMask::from_fn(h, w, |y, x| mask.get(y + margin, x + margin) == 1)
}

/// Outcome of a finite-difference gradient check.
pub struct GradCheck {
    pub checked: usize,
    pub failures: Vec<(usize, f64, f64)>,
    pub max_rel_err: f64,
}

/// Compares the analytic gradient of the full loss with central differences
/// at `coords` random coordinates of a randomly initialized tiny network.
pub fn finite_difference_check(seed: u64, size: usize, coords: usize, step: f64, rel_tol: f64) -> GradCheck {
    let mut r = rng(seed);
    let spec = ModelSpec::tiny(size, size, 2);
    let mut params = init_model(&spec, seed).unwrap();
    // nonzero biases so every block of the gradient is exercised
    for v in params.values_mut().iter_mut() {
        if *v == 0.0 {
            *v = r.random_range(-0.1..0.1);
        }
    }
    let image = random_image(&mut r, size, size);
    let mask = random_mask(&mut r, size, size, 2);
    let cfg = LossConfig::default();
    let (_, grad) = loss_and_grad(&params, &image, &mask, &cfg).unwrap();

    let mut failures = Vec::new();
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..coords {
        let i = r.random_range(0..params.len());
        let original = params.values()[i];
        params.values_mut()[i] = original + step;
        let (plus, _) = loss_and_grad(&params, &image, &mask, &cfg).unwrap();
        params.values_mut()[i] = original - step;
        let (minus, _) = loss_and_grad(&params, &image, &mask, &cfg).unwrap();
        params.values_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let scale = grad[i].abs().max(numeric.abs());
        // below this magnitude the difference is dominated by rounding
        let rel = if scale < 1e-7 { 0.0 } else { (grad[i] - numeric).abs() / scale };
        max_rel_err = max_rel_err.max(rel);
        if rel > rel_tol {
            failures.push((i, grad[i], numeric));
        }
    }
    GradCheck {
        checked: coords,
        failures,
        max_rel_err,
    }
}
