//! Run configuration: one JSON document covering the corpus, the noise
//! model, both trainers and the experiment grid. Every key is optional and
//! unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SceneParams;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::noise::{NoiseConfig, NoiseType};
use crate::train::TrainConfig;

/// Label classes of the synthetic corpus: background and foreground.
pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Edge length of the square images.
    pub size: usize,
    pub scene: SceneParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 128,
            n_test: 64,
            size: 32,
            scene: SceneParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub noise_types: Vec<NoiseType>,
    pub nols: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            noise_types: vec![NoiseType::TypeI, NoiseType::TypeII],
            nols: vec![0.1, 0.3, 0.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for the corpus and for any trainer whose seed is not set.
    pub seed: u64,
    pub corpus: CorpusConfig,
    /// Noise model for single-stage commands; `run-all` takes the type and
    /// level of each cell from `grid`.
    pub noise: NoiseConfig,
    /// Fixed selection ratio. When absent it is `1 - nol`.
    pub alpha: Option<f64>,
    /// Fraction of samples flagged for correction. When absent it is `nol`.
    pub noisy_fraction: Option<f64>,
    pub peers: TrainConfig,
    #[serde(rename = "final")]
    pub final_train: TrainConfig,
    pub grid: GridConfig,
    #[serde(skip)]
    explicit_seeds: [bool; 2],
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 1;
        Self {
            seed,
            corpus: CorpusConfig::default(),
            noise: NoiseConfig::default(),
            alpha: None,
            noisy_fraction: None,
            peers: TrainConfig { seed, ..TrainConfig::default() },
            final_train: TrainConfig { seed, ..TrainConfig::default() },
            grid: GridConfig::default(),
            explicit_seeds: [false; 2],
        }
    }
}

/// Everything one `(noise_type, nol)` cell needs, fully resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub noise: NoiseConfig,
    pub peers: TrainConfig,
    #[serde(rename = "final")]
    pub final_train: TrainConfig,
    pub noisy_fraction: f64,
    pub alpha_overridden: bool,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if value.pointer("/peers/alpha").is_some() {
            return Err(Error::Config(
                "peers.alpha is derived from the noise level; set the top-level `alpha` to override it".into(),
            ));
        }
        let explicit = [
            value.pointer("/peers/seed").is_some(),
            value.pointer("/final/seed").is_some(),
        ];
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.explicit_seeds = explicit;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces the master seed; trainers without an explicit seed follow it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if !self.explicit_seeds[0] {
            self.peers.seed = seed;
        }
        if !self.explicit_seeds[1] {
            self.final_train.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.n_train == 0 || c.n_test == 0 {
            return Err(Error::Config("corpus needs at least one train and one test sample".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("alpha {a} outside (0, 1]")));
            }
        }
        if let Some(f) = self.noisy_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("noisy_fraction {f} outside [0, 1]")));
            }
        }
        for &nol in &self.grid.nols {
            if !(0.0..1.0).contains(&nol) {
                return Err(Error::Config(format!("grid noise level {nol} outside [0, 1)")));
            }
        }
        self.noise.validate()?;
        self.peers.validate()?;
        self.final_train.validate()?;
        self.model_spec().validate()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::tiny(self.corpus.size, self.corpus.size, NUM_CLASSES)
    }

    /// Resolved settings for one cell; `alpha = 1 - nol` unless overridden.
    pub fn cell(&self, noise_type: NoiseType, nol: f64) -> Result<CellConfig> {
        let noise = NoiseConfig {
            noise_type,
            nol,
            ..self.noise.clone()
        };
        noise.validate()?;
        let alpha = self.alpha.unwrap_or(1.0 - nol);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!(
                "noise level {nol} leaves no samples to select (alpha {alpha}); set `alpha` explicitly"
            )));
        }
        let peers = TrainConfig { alpha, ..self.peers.clone() };
        peers.validate()?;
        Ok(CellConfig {
            noise,
            peers,
            final_train: self.final_train.clone(),
            noisy_fraction: self.noisy_fraction.unwrap_or(nol),
            alpha_overridden: self.alpha.is_some(),
        })
    }

    /// The cell described by the `noise` section.
    pub fn default_cell(&self) -> Result<CellConfig> {
        self.cell(self.noise.noise_type, self.noise.nol)
    }

    /// All grid cells in row order: noise types outer, levels inner.
    pub fn grid_cells(&self) -> Result<Vec<CellConfig>> {
        let mut cells = Vec::new();
        for &t in &self.grid.noise_types {
            for &nol in &self.grid.nols {
                cells.push(self.cell(t, nol)?);
            }
        }
        Ok(cells)
    }
}

/// Directory-safe name of a cell, e.g. `TypeI_nol0.3`.
pub fn cell_name(noise_type: NoiseType, nol: f64) -> String {
    format!("{}_nol{nol}", noise_type.as_str())
}
