//! Shared fixtures for the benchmarks.

use coseg::data::{make_corpus, Dataset, SceneParams};
use coseg::noise::{corrupt_dataset, NoiseConfig, NoiseType};
use coseg::ModelSpec;

pub const SIZE: usize = 32;

pub fn spec() -> ModelSpec {
    ModelSpec::tiny(SIZE, SIZE, 2)
}

/// A training set with half of its labels corrupted by boundary dilation.
pub fn noisy_train(n: usize) -> Dataset {
    let (train, _) = make_corpus(7, n, 1, SIZE, &SceneParams::default()).expect("corpus");
    let noise = NoiseConfig { noise_type: NoiseType::TypeI, nol: 0.5, ..Default::default() };
    corrupt_dataset(&train, &noise).expect("corruption")
}
