use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Layer, ModelSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// `[out][in][ky][kx]`, row-major.
    Weight,
    /// `[out]`.
    Bias,
}

/// Location of one layer's weights or biases in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub layer: usize,
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

/// Flat-index map for a spec: for every conv layer in order, its weights
/// followed by its biases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (idx, layer) in spec.layers.iter().enumerate() {
            if let Layer::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } = layer
            {
                let wlen = out_channels * in_channels * kernel * kernel;
                blocks.push(ParamBlock {
                    layer: idx,
                    name: name.clone(),
                    kind: BlockKind::Weight,
                    offset,
                    len: wlen,
                });
                offset += wlen;
                blocks.push(ParamBlock {
                    layer: idx,
                    name: name.clone(),
                    kind: BlockKind::Bias,
                    offset,
                    len: *out_channels,
                });
                offset += out_channels;
            }
        }
        Self { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (weight offset, bias offset) of conv layer `layer`.
    pub(crate) fn conv_offsets(&self, layer: usize) -> (usize, usize) {
        let mut it = self.blocks.iter().filter(|b| b.layer == layer);
        let w = it.next().expect("conv layer has weights");
        let b = it.next().expect("conv layer has biases");
        (w.offset, b.offset)
    }

    /// Block that contains flat index `index`.
    pub fn locate(&self, index: usize) -> Option<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| index >= b.offset && index < b.offset + b.len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn from_values(spec: ModelSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::for_spec(&spec);
        if layout.len() != values.len() {
            return Err(Error::shape(format!(
                "spec needs {} parameters, got {}",
                layout.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("parameter {i} is not finite")));
        }
        Ok(Self { spec, layout, values })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::from_values(spec, vec![0.0; n])
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Glorot-uniform weights, `U[-sqrt(6/(fan_in+fan_out)), +...]` with
/// `fan = channels * kernel^2`; zero biases.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for layer in &spec.layers {
        if let Layer::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } = layer
        {
            let area = kernel * kernel;
            let fan_in = (in_channels * area) as f64;
            let fan_out = (out_channels * area) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for _ in 0..out_channels * in_channels * area {
                values.push(rng.random_range(-limit..limit));
            }
            values.extend(std::iter::repeat_n(0.0, *out_channels));
        }
    }
    ModelParams::from_values(spec.clone(), values)
}
