use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pgm::quantize;
use super::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMask};
use crate::seed::{derive_seed, rng_for};

/// Knobs of the blob-scene generator. Radii are fractions of the edge length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub min_radius: f64,
    pub max_radius: f64,
    /// Amplitude of the angular boundary perturbation, relative to the radius.
    pub wobble: f64,
    pub background: (f64, f64),
    /// Foreground brightness above background.
    pub contrast: (f64, f64),
    pub noise_sigma: f64,
    pub min_foreground: f64,
    pub max_foreground: f64,
    pub max_attempts: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            min_radius: 0.18,
            max_radius: 0.36,
            wobble: 0.15,
            background: (0.15, 0.35),
            contrast: (0.3, 0.45),
            noise_sigma: 0.15,
            min_foreground: 0.15,
            max_foreground: 0.5,
            max_attempts: 64,
        }
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    cos_t: f64,
    sin_t: f64,
    harmonics: [(f64, f64); 3],
}

impl Blob {
    fn random(rng: &mut impl Rng, size: f64, params: &SceneParams, scale: f64) -> Self {
        let r_lo = params.min_radius * size * scale;
        let r_hi = params.max_radius * size * scale;
        let theta = rng.random_range(0.0..PI);
        let mut harmonics = [(0.0, 0.0); 3];
        for h in &mut harmonics {
            *h = (rng.random_range(0.0..params.wobble / 3.0), rng.random_range(0.0..2.0 * PI));
        }
        Self {
            cy: rng.random_range(0.3 * size..0.7 * size),
            cx: rng.random_range(0.3 * size..0.7 * size),
            ry: rng.random_range(r_lo..r_hi),
            rx: rng.random_range(r_lo..r_hi),
            cos_t: theta.cos(),
            sin_t: theta.sin(),
            harmonics,
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos_t + dy * self.sin_t;
        let v = -dx * self.sin_t + dy * self.cos_t;
        let rho = ((u / self.rx).powi(2) + (v / self.ry).powi(2)).sqrt();
        let phi = v.atan2(u);
        let limit = 1.0
            + self
                .harmonics
                .iter()
                .enumerate()
                .map(|(k, &(amp, phase))| amp * ((k as f64 + 2.0) * phi + phase).cos())
                .sum::<f64>();
        rho <= limit
    }
}

fn try_scene(seed: u64, size: usize, params: &SceneParams) -> Option<(GrayImage, LabelMask)> {
    let mut rng = rng_for(seed, "scene", 0);
    let n_blobs = if rng.random_bool(0.5) { 1 } else { 2 };
    let scale = if n_blobs == 1 { 1.0 } else { 0.75 };
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| Blob::random(&mut rng, size as f64, params, scale))
        .collect();
    let mask = LabelMask::from_fn(size, size, |y, x| {
        blobs.iter().any(|b| b.contains(y as f64 + 0.5, x as f64 + 0.5))
    });

    let edge = size - 1;
    let touches_border = (0..size).any(|i| mask.get(0, i) + mask.get(edge, i) + mask.get(i, 0) + mask.get(i, edge) > 0);
    let fraction = mask.count(1) as f64 / (size * size) as f64;
    if touches_border || fraction < params.min_foreground || fraction > params.max_foreground {
        return None;
    }

    let background = rng.random_range(params.background.0..params.background.1);
    let foreground = background + rng.random_range(params.contrast.0..params.contrast.1);
    // mild linear illumination ramp
    let ramp_y = rng.random_range(-0.05..0.05);
    let ramp_x = rng.random_range(-0.05..0.05);
    let noise = Normal::new(0.0, params.noise_sigma).ok()?;
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let base = if mask.get(y, x) == 1 { foreground } else { background };
            let ramp = ramp_y * (y as f64 / edge as f64 - 0.5) + ramp_x * (x as f64 / edge as f64 - 0.5);
            let v: f64 = base + ramp + noise.sample(&mut rng);
            // stored 8-bit, so PGM round trips are exact
            pixels.push(quantize(v) as f64 / 255.0);
        }
    }
    Some((GrayImage::new(size, size, pixels).ok()?, mask))
}

/// One clean sample with one or two bright perturbed-ellipse blobs on a
/// darker noisy background. Pure in `seed`.
pub fn generate_scene(seed: u64, size: usize, params: &SceneParams) -> Result<Sample> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!("scene size {size} must be at least 16")));
    }
    for attempt in 0..params.max_attempts.max(1) {
        let attempt_seed = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, "scene-retry", attempt as u64)
        };
        if let Some((image, mask)) = try_scene(attempt_seed, size, params) {
            return Sample::clean(0, image, mask);
        }
    }
    Err(Error::Generation {
        seed,
        attempts: params.max_attempts,
    })
}

/// Train and test corpora with odd and even ids respectively.
pub fn make_corpus(seed: u64, n_train: usize, n_test: usize, size: usize, params: &SceneParams) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidArgument("corpora need at least one sample each".into()));
    }
    let build = |ids: Vec<u64>, split| -> Result<Dataset> {
        let samples = ids
            .into_iter()
            .map(|id| {
                let mut s = generate_scene(derive_seed(seed, "corpus", id), size, params)?;
                s.id = id;
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(split, samples)
    };
    let train = build((0..n_train as u64).map(|i| 2 * i + 1).collect(), Split::Train)?;
    let test = build((0..n_test as u64).map(|i| 2 * i + 2).collect(), Split::Test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let p = SceneParams::default();
        assert_eq!(generate_scene(42, 32, &p).unwrap(), generate_scene(42, 32, &p).unwrap());
        assert_ne!(generate_scene(42, 32, &p).unwrap(), generate_scene(43, 32, &p).unwrap());
    }

    #[test]
    fn foreground_fraction_and_brightness() {
        let p = SceneParams::default();
        for seed in 0..100 {
            let s = generate_scene(seed, 32, &p).unwrap();
            let fg = s.mask.count(1) as f64 / 1024.0;
            assert!((0.15..=0.5).contains(&fg), "seed {seed}: {fg}");
            let (mut inside, mut outside) = ((0.0, 0), (0.0, 0));
            for (v, &c) in s.image.pixels().iter().zip(s.mask.classes()) {
                let acc = if c == 1 { &mut inside } else { &mut outside };
                acc.0 += v;
                acc.1 += 1;
            }
            assert!(inside.0 / inside.1 as f64 > outside.0 / outside.1 as f64);
        }
    }

    #[test]
    fn too_small_rejected() {
        assert!(generate_scene(1, 8, &SceneParams::default()).is_err());
    }

    #[test]
    fn impossible_params_rejected() {
        let p = SceneParams {
            min_foreground: 0.9,
            max_foreground: 0.95,
            max_attempts: 4,
            ..SceneParams::default()
        };
        assert!(matches!(generate_scene(1, 32, &p), Err(Error::Generation { .. })));
    }

    #[test]
    fn corpus_ids_and_sizes() {
        let (train, test) = make_corpus(1, 4, 2, 32, &SceneParams::default()).unwrap();
        let mut ids = train.ids();
        ids.extend(test.ids());
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 6);
        assert!(train.ids().iter().all(|id| !test.ids().contains(id)));
        assert!(train.samples.iter().chain(&test.samples).all(|s| s.image.height() == 32 && s.image.width() == 32));
        let (train2, test2) = make_corpus(1, 4, 2, 32, &SceneParams::default()).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }
}
