//! Co-Seg: collaborative training of segmentation networks on datasets with
//! noisy labels.
//!
//! Two peer networks are trained side by side; within every mini-batch each
//! one ranks samples by corruption score and hands its low-score picks to the
//! other for the gradient step. The trained pair then flags the
//! highest-scoring samples as noisy and relabels pixels on which both
//! networks agree with each other but not with the stored label. A fresh
//! network is finally trained on the corrected dataset.

pub mod config;
pub mod cotrain;
pub mod correction;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod morphology;
pub mod noise;
pub mod objectives;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use image::{GrayImage, LabelMask, ProbMap};
pub use model::{ModelParams, ModelSpec};
pub use objectives::{LossConfig, ScoredSample};
