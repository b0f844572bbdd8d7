//! Forward and reverse passes for the layer graph described by a
//! [`ModelSpec`]. Activations are channel-major `[c][y][x]` buffers.

use super::params::ModelParams;
use super::spec::{Layer, Shape};
use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMask, ProbMap};
use crate::objectives::{data_loss_and_prob_grad, l2_penalty, LossConfig};

/// Everything the reverse pass needs from one forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    input: Vec<f64>,
    shapes: Vec<Shape>,
    /// Output of every layer (post-activation for convolutions).
    outputs: Vec<Vec<f64>>,
    probs: ProbMap,
}

impl ForwardTrace {
    pub fn probs(&self) -> &ProbMap {
        &self.probs
    }

    pub fn into_probs(self) -> ProbMap {
        self.probs
    }
}

fn check_image(params: &ModelParams, image: &GrayImage) -> Result<()> {
    let spec = params.spec();
    if image.height() != spec.height || image.width() != spec.width {
        return Err(Error::shape(format!(
            "model expects {}x{} images, got {}x{}",
            spec.height,
            spec.width,
            image.height(),
            image.width()
        )));
    }
    Ok(())
}

fn ensure_finite(values: &[f64], location: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            location: location(),
            detail: "non-finite activation".into(),
        })
    }
}

fn layer_label(layer: &Layer, idx: usize) -> String {
    match layer {
        Layer::Conv { name, .. } => format!("layer {idx} ({name})"),
        Layer::Upsample2x => format!("layer {idx} (upsample)"),
        Layer::ConcatSkip { .. } => format!("layer {idx} (concat)"),
    }
}

/// Range of output columns `ox` whose input column `ox*stride + offset`
/// lies inside `[0, limit)`; `offset` is `k - pad` and may be negative.
#[inline]
fn valid_range(out_len: usize, stride: usize, offset: isize, limit: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi = ((limit as isize - offset) + s - 1) / s;
    let hi = hi.clamp(0, out_len as isize);
    (lo.min(hi) as usize, hi as usize)
}

struct ConvGeom {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
}

impl ConvGeom {
    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }
}

fn conv_forward(g: &ConvGeom, input: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let k = g.kernel;
    let pad = g.pad();
    let out_plane = g.out_h * g.out_w;
    let in_plane = g.in_h * g.in_w;
    for o in 0..g.out_c {
        let out_o = &mut out[o * out_plane..(o + 1) * out_plane];
        out_o.fill(bias[o]);
        for i in 0..g.in_c {
            let in_i = &input[i * in_plane..(i + 1) * in_plane];
            for ky in 0..k {
                let (y_lo, y_hi) = valid_range(g.out_h, g.stride, ky as isize - pad, g.in_h);
                for kx in 0..k {
                    let w = weights[((o * g.in_c + i) * k + ky) * k + kx];
                    let (x_lo, x_hi) = valid_range(g.out_w, g.stride, kx as isize - pad, g.in_w);
                    for oy in y_lo..y_hi {
                        let iy = (oy * g.stride) as isize + ky as isize - pad;
                        let in_row = &in_i[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                        let out_row = &mut out_o[oy * g.out_w..(oy + 1) * g.out_w];
                        let x_off = kx as isize - pad;
                        if g.stride == 1 {
                            let src = &in_row[(x_lo as isize + x_off) as usize..(x_hi as isize + x_off) as usize];
                            for (dst, &v) in out_row[x_lo..x_hi].iter_mut().zip(src) {
                                *dst += w * v;
                            }
                        } else {
                            for (ox, dst) in out_row.iter_mut().enumerate().take(x_hi).skip(x_lo) {
                                let ix = (ox * g.stride) as isize + x_off;
                                *dst += w * in_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient
/// given the gradient with respect to the pre-activation output.
fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weights: &[f64],
    d_out: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    let k = g.kernel;
    let pad = g.pad();
    let out_plane = g.out_h * g.out_w;
    let in_plane = g.in_h * g.in_w;
    for o in 0..g.out_c {
        let dout_o = &d_out[o * out_plane..(o + 1) * out_plane];
        d_bias[o] += dout_o.iter().sum::<f64>();
        for i in 0..g.in_c {
            let in_i = &input[i * in_plane..(i + 1) * in_plane];
            for ky in 0..k {
                let (y_lo, y_hi) = valid_range(g.out_h, g.stride, ky as isize - pad, g.in_h);
                for kx in 0..k {
                    let widx = ((o * g.in_c + i) * k + ky) * k + kx;
                    let w = weights[widx];
                    let x_off = kx as isize - pad;
                    let (x_lo, x_hi) = valid_range(g.out_w, g.stride, x_off, g.in_w);
                    let mut dw = 0.0;
                    for oy in y_lo..y_hi {
                        let iy = ((oy * g.stride) as isize + ky as isize - pad) as usize;
                        let in_row = &in_i[iy * g.in_w..(iy + 1) * g.in_w];
                        let dout_row = &dout_o[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let lo = (x_lo as isize + x_off) as usize;
                            let hi = (x_hi as isize + x_off) as usize;
                            let src = &in_row[lo..hi];
                            let grads = &dout_row[x_lo..x_hi];
                            dw += src.iter().zip(grads).map(|(a, b)| a * b).sum::<f64>();
                            if let Some(d_in) = d_input.as_deref_mut() {
                                let d_row = &mut d_in[i * in_plane + iy * g.in_w..i * in_plane + (iy + 1) * g.in_w];
                                for (dst, &gv) in d_row[lo..hi].iter_mut().zip(grads) {
                                    *dst += w * gv;
                                }
                            }
                        } else {
                            for (ox, &gv) in dout_row.iter().enumerate().take(x_hi).skip(x_lo) {
                                let ix = ((ox * g.stride) as isize + x_off) as usize;
                                dw += in_row[ix] * gv;
                                if let Some(d_in) = d_input.as_deref_mut() {
                                    d_in[i * in_plane + iy * g.in_w + ix] += w * gv;
                                }
                            }
                        }
                    }
                    d_weights[widx] += dw;
                }
            }
        }
    }
}

fn softmax_pixels(logits: &[f64], classes: usize, pixels: usize) -> Vec<f64> {
    let mut probs = vec![0.0; pixels * classes];
    for px in 0..pixels {
        let mut max = f64::NEG_INFINITY;
        for c in 0..classes {
            max = max.max(logits[c * pixels + px]);
        }
        let mut sum = 0.0;
        for c in 0..classes {
            let e = (logits[c * pixels + px] - max).exp();
            probs[px * classes + c] = e;
            sum += e;
        }
        for c in 0..classes {
            probs[px * classes + c] /= sum;
        }
    }
    probs
}

/// Forward pass keeping every intermediate activation.
pub fn forward_traced(params: &ModelParams, image: &GrayImage) -> Result<ForwardTrace> {
    check_image(params, image)?;
    let spec = params.spec();
    let shapes = spec.shapes()?;
    let layout = params.layout();
    let values = params.values();
    let input = image.pixels().to_vec();
    let input_shape = Shape {
        channels: 1,
        height: spec.height,
        width: spec.width,
    };
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(spec.layers.len());

    for (idx, layer) in spec.layers.iter().enumerate() {
        let (prev, prev_shape) = if idx == 0 {
            (&input, input_shape)
        } else {
            (&outputs[idx - 1], shapes[idx - 1])
        };
        let shape = shapes[idx];
        let out = match layer {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                relu,
                ..
            } => {
                let geom = ConvGeom {
                    in_c: *in_channels,
                    in_h: prev_shape.height,
                    in_w: prev_shape.width,
                    out_c: *out_channels,
                    out_h: shape.height,
                    out_w: shape.width,
                    kernel: *kernel,
                    stride: *stride,
                };
                let (w_off, b_off) = layout.conv_offsets(idx);
                let wlen = out_channels * in_channels * kernel * kernel;
                let mut out = vec![0.0; shape.len()];
                conv_forward(
                    &geom,
                    prev,
                    &values[w_off..w_off + wlen],
                    &values[b_off..b_off + out_channels],
                    &mut out,
                );
                if *relu {
                    for v in &mut out {
                        *v = v.max(0.0);
                    }
                }
                out
            }
            Layer::Upsample2x => {
                let mut out = vec![0.0; shape.len()];
                let (ih, iw) = (prev_shape.height, prev_shape.width);
                for c in 0..shape.channels {
                    for y in 0..shape.height {
                        let src = &prev[c * ih * iw + (y / 2) * iw..c * ih * iw + (y / 2 + 1) * iw];
                        let dst = &mut out[(c * shape.height + y) * shape.width..(c * shape.height + y + 1) * shape.width];
                        for (x, d) in dst.iter_mut().enumerate() {
                            *d = src[x / 2];
                        }
                    }
                }
                out
            }
            Layer::ConcatSkip { from } => {
                let mut out = Vec::with_capacity(shape.len());
                out.extend_from_slice(prev);
                out.extend_from_slice(&outputs[*from]);
                out
            }
        };
        ensure_finite(&out, || layer_label(layer, idx))?;
        outputs.push(out);
    }

    let pixels = spec.height * spec.width;
    let probs = softmax_pixels(outputs.last().unwrap(), spec.num_classes, pixels);
    ensure_finite(&probs, || "softmax".to_string())?;
    Ok(ForwardTrace {
        input,
        shapes,
        outputs,
        probs: ProbMap::from_raw(spec.height, spec.width, spec.num_classes, probs),
    })
}

/// Per-pixel class probabilities for `image`.
pub fn forward(params: &ModelParams, image: &GrayImage) -> Result<ProbMap> {
    forward_traced(params, image).map(ForwardTrace::into_probs)
}

/// Parameter gradient given the gradient of a scalar with respect to the
/// probabilities of `trace` (pixel-major, like [`ProbMap::probs`]).
pub fn backward(params: &ModelParams, trace: &ForwardTrace, d_probs: &[f64]) -> Result<Vec<f64>> {
    let spec = params.spec();
    let layout = params.layout();
    let values = params.values();
    let classes = spec.num_classes;
    let pixels = spec.height * spec.width;
    let p = trace.probs.probs();
    if d_probs.len() != p.len() {
        return Err(Error::shape(format!(
            "probability gradient has {} entries, expected {}",
            d_probs.len(),
            p.len()
        )));
    }

    let n_layers = spec.layers.len();
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_layers];
    let mut d_logits = vec![0.0; pixels * classes];
    for px in 0..pixels {
        let pp = &p[px * classes..(px + 1) * classes];
        let dp = &d_probs[px * classes..(px + 1) * classes];
        let dot: f64 = pp.iter().zip(dp).map(|(a, b)| a * b).sum();
        for c in 0..classes {
            d_logits[c * pixels + px] = pp[c] * (dp[c] - dot);
        }
    }
    grads[n_layers - 1] = Some(d_logits);

    let mut d_params = vec![0.0; values.len()];
    let input_shape = Shape {
        channels: 1,
        height: spec.height,
        width: spec.width,
    };

    for idx in (0..n_layers).rev() {
        let Some(mut d_out) = grads[idx].take() else {
            continue;
        };
        let layer = &spec.layers[idx];
        ensure_finite(&d_out, || format!("gradient of {}", layer_label(layer, idx)))?;
        let (prev, prev_shape) = if idx == 0 {
            (&trace.input, input_shape)
        } else {
            (&trace.outputs[idx - 1], trace.shapes[idx - 1])
        };
        let shape = trace.shapes[idx];
        let accumulate = |target: usize, g: Vec<f64>, grads: &mut Vec<Option<Vec<f64>>>| match &mut grads[target] {
            Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        };
        match layer {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                relu,
                ..
            } => {
                if *relu {
                    for (d, &o) in d_out.iter_mut().zip(&trace.outputs[idx]) {
                        if o <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let geom = ConvGeom {
                    in_c: *in_channels,
                    in_h: prev_shape.height,
                    in_w: prev_shape.width,
                    out_c: *out_channels,
                    out_h: shape.height,
                    out_w: shape.width,
                    kernel: *kernel,
                    stride: *stride,
                };
                let (w_off, b_off) = layout.conv_offsets(idx);
                let wlen = out_channels * in_channels * kernel * kernel;
                let (head, tail) = d_params.split_at_mut(b_off);
                let d_w = &mut head[w_off..w_off + wlen];
                let d_b = &mut tail[..*out_channels];
                if idx == 0 {
                    conv_backward(&geom, prev, &values[w_off..w_off + wlen], &d_out, d_w, d_b, None);
                } else {
                    let mut d_in = vec![0.0; prev_shape.len()];
                    conv_backward(
                        &geom,
                        prev,
                        &values[w_off..w_off + wlen],
                        &d_out,
                        d_w,
                        d_b,
                        Some(&mut d_in),
                    );
                    accumulate(idx - 1, d_in, &mut grads);
                }
            }
            Layer::Upsample2x => {
                let (ih, iw) = (prev_shape.height, prev_shape.width);
                let mut d_in = vec![0.0; prev_shape.len()];
                for c in 0..shape.channels {
                    for y in 0..shape.height {
                        for x in 0..shape.width {
                            d_in[c * ih * iw + (y / 2) * iw + x / 2] += d_out[(c * shape.height + y) * shape.width + x];
                        }
                    }
                }
                if idx > 0 {
                    accumulate(idx - 1, d_in, &mut grads);
                }
            }
            Layer::ConcatSkip { from } => {
                let split = prev_shape.len();
                let skip = d_out.split_off(split);
                if idx > 0 {
                    accumulate(idx - 1, d_out, &mut grads);
                }
                accumulate(*from, skip, &mut grads);
            }
        }
    }
    Ok(d_params)
}

/// Data-term loss of one sample and its gradient, without the weight
/// penalty. Batched training averages these before adding the penalty.
pub fn data_loss_and_grad(
    params: &ModelParams,
    trace: &ForwardTrace,
    mask: &LabelMask,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    if !trace.probs.matches_mask(mask) {
        return Err(Error::shape("mask does not match model output".to_string()));
    }
    let (loss, d_probs) = data_loss_and_prob_grad(&trace.probs, mask, cfg)?;
    if !loss.is_finite() {
        return Err(Error::Numerical {
            location: "loss".into(),
            detail: format!("loss evaluated to {loss}"),
        });
    }
    let grad = backward(params, trace, &d_probs)?;
    Ok((loss, grad))
}

/// Combined loss `CE + lambda1*Dice + lambda2*||W||^2` of a single sample and
/// its exact gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &ModelParams,
    image: &GrayImage,
    mask: &LabelMask,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let trace = forward_traced(params, image)?;
    let (data_loss, mut grad) = data_loss_and_grad(params, &trace, mask, cfg)?;
    add_weight_penalty(params.values(), cfg.lambda2, &mut grad);
    Ok((data_loss + cfg.lambda2 * l2_penalty(params.values()), grad))
}

pub(crate) fn add_weight_penalty(values: &[f64], lambda2: f64, grad: &mut [f64]) {
    if lambda2 != 0.0 {
        for (g, w) in grad.iter_mut().zip(values) {
            *g += 2.0 * lambda2 * w;
        }
    }
}
