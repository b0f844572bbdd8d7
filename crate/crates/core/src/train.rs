//! Mini-batch training of a single network, shared by the baselines and the
//! final retraining stage, plus the configuration common to all trainers.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TrainingView};
use crate::error::{Error, Result};
use crate::metrics::{mean_scores, EvalResult};
use crate::model::{add_weight_penalty, data_loss_and_grad, forward, forward_traced, init_model, sgd_step, ForwardTrace, ModelParams, ModelSpec, SgdState};
use crate::objectives::{l2_penalty, LossConfig};
use crate::seed::{derive_seed, rng_for};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of each mini-batch handed to the peer (co-training only).
    pub alpha: f64,
    /// Epochs at the start of co-training during which `alpha` is treated as 1.
    pub warmup_epochs: usize,
    /// Step size per pixel: the applied step is `lr / (H*W)` because losses
    /// are summed over pixels.
    pub lr: f64,
    pub momentum: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub prob_clamp: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 8,
            alpha: 1.0,
            warmup_epochs: 5,
            lr: 0.05,
            momentum: 0.9,
            lambda1: LossConfig::default().lambda1,
            lambda2: LossConfig::default().lambda2,
            prob_clamp: LossConfig::default().prob_clamp,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!("batch_size {} < 2", self.batch_size)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        self.loss().validate()
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            prob_clamp: self.prob_clamp,
        }
    }

    pub(crate) fn step_size(&self, spec: &ModelSpec) -> f64 {
        self.lr / (spec.height * spec.width) as f64
    }
}

/// Sample visiting order for one epoch.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "epoch-order", epoch as u64));
    order
}

/// Seed for the initial weights of network `index` of a run.
pub fn init_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, "init", index)
}

/// One optimizer step on the mean loss of `members`, each given with the
/// forward trace computed at the current parameters. Returns the batch
/// loss before the step.
pub(crate) fn apply_batch(
    params: &mut ModelParams,
    state: &mut SgdState,
    members: &[(&TrainingView<'_>, &ForwardTrace)],
    cfg: &TrainConfig,
) -> Result<f64> {
    let n = members.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (view, trace) in members {
        let (l, g) = data_loss_and_grad(params, trace, view.mask, &cfg.loss()).map_err(|e| match e {
            Error::Numerical { location, detail } => Error::Numerical {
                location: format!("sample {}: {location}", view.id),
                detail,
            },
            other => other,
        })?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    add_weight_penalty(params.values(), cfg.lambda2, &mut grad);
    let loss = loss / n + cfg.lambda2 * l2_penalty(params.values());
    let lr = cfg.step_size(params.spec());
    sgd_step(params.values_mut(), &grad, state, lr, cfg.momentum)?;
    Ok(loss)
}

/// Accuracy and Dice of the model's predictions against ground truth on the
/// training samples. Evaluation only.
pub fn train_set_metrics(params: &ModelParams, data: &Dataset) -> Result<EvalResult> {
    let preds = data
        .samples
        .iter()
        .map(|s| forward(params, &s.image).map(|p| p.argmax()))
        .collect::<Result<Vec<_>>>()?;
    mean_scores(preds.iter().zip(data.samples.iter().map(|s| &s.pristine_mask)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_acc: f64,
    pub train_dic: f64,
}

fn wrap_epoch(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::Numerical { location, detail } => Error::Numerical {
            location: format!("epoch {epoch}, batch {batch}, {location}"),
            detail,
        },
        other => other,
    }
}

/// Plain mini-batch training on every sample (no selection). Returns the
/// trained parameters and one record per epoch.
pub fn train_single(init: ModelParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, Vec<SingleEpoch>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut params = init;
    let mut state = SgdState::new(params.len());
    let views = data.training_views();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, views.len());
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let traces = chunk
                .iter()
                .map(|&i| forward_traced(&params, views[i].image))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| wrap_epoch(epoch, b, e))?;
            let members: Vec<_> = chunk.iter().map(|&i| &views[i]).zip(&traces).collect();
            total += apply_batch(&mut params, &mut state, &members, cfg).map_err(|e| wrap_epoch(epoch, b, e))?;
            batches += 1;
        }
        let metrics = train_set_metrics(&params, data)?;
        history.push(SingleEpoch {
            epoch,
            mean_loss: total / batches as f64,
            train_acc: metrics.acc,
            train_dic: metrics.dic,
        });
    }
    Ok((params, history))
}

/// Fresh network trained on `data`; the weights depend only on `cfg.seed`.
pub fn train_fresh(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, Vec<SingleEpoch>)> {
    let init = init_model(spec, init_seed(cfg.seed, 0))?;
    train_single(init, data, cfg)
}
