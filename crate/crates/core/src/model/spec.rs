use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One step of the network graph. Layers run in order; each consumes the
/// output of the previous layer (the image for the first layer).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    /// Zero-padded convolution with `kernel / 2` padding.
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        relu: bool,
    },
    /// Nearest-neighbour 2x upsampling.
    Upsample2x,
    /// Appends the channels produced by layer `from` after the current ones.
    ConcatSkip { from: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    /// The reference encoder-decoder: two resolutions, one skip connection,
    /// 1x1 classifier head. Height and width must be even.
    pub fn tiny(height: usize, width: usize, num_classes: usize) -> Self {
        let conv = |name: &str, i, o, k, s, relu| Layer::Conv {
            name: name.to_string(),
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: s,
            relu,
        };
        Self {
            height,
            width,
            num_classes,
            layers: vec![
                conv("enc1", 1, 8, 3, 1, true),
                conv("down", 8, 16, 3, 2, true),
                conv("bottleneck", 16, 16, 3, 1, true),
                Layer::Upsample2x,
                conv("dec1", 16, 8, 3, 1, true),
                Layer::ConcatSkip { from: 0 },
                conv("head", 16, num_classes, 1, 1, false),
            ],
        }
    }

    /// Output shape of every layer, validating channel and spatial agreement.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!("num_classes = {} < 2", self.num_classes)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidSpec("empty input size".into()));
        }
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.layers.len());
        let mut cur = Shape {
            channels: 1,
            height: self.height,
            width: self.width,
        };
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Conv {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    ..
                } => {
                    if *in_channels != cur.channels {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx} ({name}) expects {in_channels} input channels, receives {}",
                            cur.channels
                        )));
                    }
                    if *kernel == 0 || kernel % 2 == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx} ({name}) kernel {kernel} must be odd"
                        )));
                    }
                    if *stride == 0 || *out_channels == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx} ({name}) has zero stride or zero output channels"
                        )));
                    }
                    let pad = kernel / 2;
                    Shape {
                        channels: *out_channels,
                        height: (cur.height + 2 * pad - kernel) / stride + 1,
                        width: (cur.width + 2 * pad - kernel) / stride + 1,
                    }
                }
                Layer::Upsample2x => Shape {
                    channels: cur.channels,
                    height: cur.height * 2,
                    width: cur.width * 2,
                },
                Layer::ConcatSkip { from } => {
                    let Some(src) = shapes.get(*from).copied() else {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx} concatenates layer {from}, which does not precede it"
                        )));
                    };
                    if src.height != cur.height || src.width != cur.width {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx} concatenates {}x{} onto {}x{}",
                            src.height, src.width, cur.height, cur.width
                        )));
                    }
                    Shape {
                        channels: cur.channels + src.channels,
                        ..cur
                    }
                }
            };
            shapes.push(cur);
        }
        match self.layers.last() {
            Some(Layer::Conv { relu: false, .. }) => {}
            _ => {
                return Err(Error::InvalidSpec(
                    "final layer must be a convolution without activation".into(),
                ))
            }
        }
        if cur.channels != self.num_classes {
            return Err(Error::InvalidSpec(format!(
                "final layer produces {} channels for {} classes",
                cur.channels, self.num_classes
            )));
        }
        if cur.height != self.height || cur.width != self.width {
            return Err(Error::InvalidSpec(format!(
                "output is {}x{}, input is {}x{}",
                cur.height, cur.width, self.height, self.width
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => out_channels * in_channels * kernel * kernel + out_channels,
                _ => 0,
            })
            .sum()
    }

    /// Stable 64-bit fingerprint of the architecture, stored in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&canonical);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
