//! Samples, datasets, the synthetic scene generator and on-disk formats.

mod manifest;
mod pgm;
mod scene;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMask};

pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use pgm::{
    decode_pgm, encode_pgm, quantize, read_pgm_image, read_pgm_mask, write_pgm_image, write_pgm_mask, PgmFormat,
    RawPgm,
};
pub use scene::{generate_scene, make_corpus, SceneParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Clean,
    CorruptedTypeI,
    CorruptedTypeII,
    Corrected,
}

impl Provenance {
    pub fn is_corrupted(self) -> bool {
        matches!(self, Provenance::CorruptedTypeI | Provenance::CorruptedTypeII)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Clean => "Clean",
            Provenance::CorruptedTypeI => "CorruptedTypeI",
            Provenance::CorruptedTypeII => "CorruptedTypeII",
            Provenance::Corrected => "Corrected",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// An image with its training label and the evaluation-only ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub image: GrayImage,
    /// The label a learner sees; possibly corrupted.
    pub mask: LabelMask,
    /// Ground truth. Only metrics and reports read this.
    pub pristine_mask: LabelMask,
    pub provenance: Provenance,
}

/// What learning code is allowed to see of a sample.
#[derive(Clone, Copy, Debug)]
pub struct TrainingView<'a> {
    pub id: u64,
    pub image: &'a GrayImage,
    pub mask: &'a LabelMask,
}

impl Sample {
    pub fn clean(id: u64, image: GrayImage, mask: LabelMask) -> Result<Self> {
        let sample = Self {
            id,
            image,
            pristine_mask: mask.clone(),
            mask,
            provenance: Provenance::Clean,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.image.height(), self.image.width());
        for (what, m) in [("mask", &self.mask), ("pristine mask", &self.pristine_mask)] {
            if m.height() != h || m.width() != w {
                return Err(Error::shape(format!(
                    "sample {}: {what} is {}x{}, image is {h}x{w}",
                    self.id,
                    m.height(),
                    m.width()
                )));
            }
        }
        if self.provenance == Provenance::Clean && self.mask != self.pristine_mask {
            return Err(Error::InvalidArgument(format!(
                "sample {} is marked clean but its mask differs from ground truth",
                self.id
            )));
        }
        Ok(())
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            id: self.id,
            image: &self.image,
            mask: &self.mask,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(split: Split, samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no samples".into()))?;
        let (height, width, num_classes) = (first.image.height(), first.image.width(), first.mask.num_classes());
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            s.validate()?;
            if s.image.height() != height || s.image.width() != width {
                return Err(Error::shape(format!(
                    "sample {} is {}x{}, dataset is {height}x{width}",
                    s.id,
                    s.image.height(),
                    s.image.width()
                )));
            }
            if s.mask.num_classes() != num_classes || s.pristine_mask.num_classes() != num_classes {
                return Err(Error::InvalidArgument(format!(
                    "sample {} has a different class count than the dataset ({num_classes})",
                    s.id
                )));
            }
            if !ids.insert(s.id) {
                return Err(Error::InvalidArgument(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self {
            split,
            height,
            width,
            num_classes,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn training_views(&self) -> Vec<TrainingView<'_>> {
        self.samples.iter().map(Sample::training_view).collect()
    }

    pub fn get(&self, id: u64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Copy of the dataset with every label reset to ground truth.
    pub fn with_pristine_labels(&self) -> Dataset {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.mask = s.pristine_mask.clone();
            s.provenance = Provenance::Clean;
        }
        out
    }
}
