//! Pixel grids shared by every stage: network input images, per-pixel class
//! labels and per-pixel class probabilities. All grids are row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest edge length accepted for an image.
pub const MIN_EDGE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < MIN_EDGE || width < MIN_EDGE {
            return Err(Error::InvalidArgument(format!(
                "image must be at least {MIN_EDGE}x{MIN_EDGE}, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "intensity {} at index {i} outside [0,1]",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Per-pixel class ids. `g_l(x)` is the one-hot view: 1 iff `class(x) == l`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMask {
    height: usize,
    width: usize,
    num_classes: usize,
    classes: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, num_classes: usize, classes: Vec<u8>) -> Result<Self> {
        if !(2..=256).contains(&num_classes) {
            return Err(Error::InvalidArgument(format!(
                "num_classes must be in [2, 256], got {num_classes}"
            )));
        }
        if classes.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} mask needs {} labels, got {}",
                height * width,
                classes.len()
            )));
        }
        if let Some(i) = classes.iter().position(|&c| c as usize >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "class id {} at index {i} not below {num_classes}",
                classes[i]
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            classes,
        })
    }

    pub fn zeros(height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            height,
            width,
            num_classes,
            classes: vec![0; height * width],
        }
    }

    /// Binary mask from a foreground predicate.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut classes = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                classes.push(f(y, x) as u8);
            }
        }
        Self {
            height,
            width,
            num_classes: 2,
            classes,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.classes[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, class: u8) {
        assert!((class as usize) < self.num_classes);
        self.classes[y * self.width + x] = class;
    }

    pub(crate) fn classes_mut(&mut self) -> &mut [u8] {
        &mut self.classes
    }

    /// Number of pixels labelled `class`.
    pub fn count(&self, class: u8) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    pub fn same_shape(&self, other: &LabelMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Number of pixels where the two masks disagree.
    pub fn hamming(&self, other: &LabelMask) -> usize {
        self.classes
            .iter()
            .zip(&other.classes)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Per-pixel class probabilities, stored pixel-major: `probs[pixel * L + class]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbMap {
    height: usize,
    width: usize,
    num_classes: usize,
    probs: Vec<f64>,
}

impl ProbMap {
    pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

    pub fn new(height: usize, width: usize, num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if probs.len() != height * width * num_classes {
            return Err(Error::shape(format!(
                "{height}x{width}x{num_classes} probability map needs {} values, got {}",
                height * width * num_classes,
                probs.len()
            )));
        }
        for (pixel, chunk) in probs.chunks(num_classes).enumerate() {
            if chunk.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "probability outside [0,1] at pixel {pixel}"
                )));
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > Self::SIMPLEX_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "probabilities at pixel {pixel} sum to {sum}"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            probs,
        })
    }

    /// Skips validation; callers guarantee a per-pixel simplex.
    pub(crate) fn from_raw(height: usize, width: usize, num_classes: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), height * width * num_classes);
        Self {
            height,
            width,
            num_classes,
            probs,
        }
    }

    /// One-hot probabilities for `mask`.
    pub fn one_hot(mask: &LabelMask) -> Self {
        let l = mask.num_classes();
        let mut probs = vec![0.0; mask.len() * l];
        for (pixel, &c) in mask.classes().iter().enumerate() {
            probs[pixel * l + c as usize] = 1.0;
        }
        Self::from_raw(mask.height(), mask.width(), l, probs)
    }

    pub fn uniform(height: usize, width: usize, num_classes: usize) -> Self {
        let p = 1.0 / num_classes as f64;
        Self::from_raw(height, width, num_classes, vec![p; height * width * num_classes])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.probs[index * self.num_classes..(index + 1) * self.num_classes]
    }

    pub fn get(&self, y: usize, x: usize, class: usize) -> f64 {
        self.probs[(y * self.width + x) * self.num_classes + class]
    }

    /// Hard prediction; ties go to the lowest class id.
    pub fn argmax(&self) -> LabelMask {
        let classes = self
            .probs
            .chunks(self.num_classes)
            .map(|chunk| {
                let mut best = 0;
                for (c, &p) in chunk.iter().enumerate().skip(1) {
                    if p > chunk[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelMask {
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            classes,
        }
    }

    pub fn matches_mask(&self, mask: &LabelMask) -> bool {
        self.height == mask.height() && self.width == mask.width() && self.num_classes == mask.num_classes()
    }
}
