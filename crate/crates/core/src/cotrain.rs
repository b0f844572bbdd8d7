//! Robust co-training of two peer networks. In every mini-batch each network
//! ranks the samples by corruption score under its own current weights, keeps
//! the lowest-scoring fraction `alpha`, and hands that selection to its peer,
//! which takes one gradient step on it.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward, forward_traced, init_model, ModelParams, ModelSpec, SgdState};
use crate::objectives::{corruption_score, ScoredSample};
use crate::train::{apply_batch, epoch_order, init_seed, train_set_metrics, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PeerPair {
    pub nets: [ModelParams; 2],
    pub states: [SgdState; 2],
}

impl PeerPair {
    pub fn new(net1: ModelParams, net2: ModelParams) -> Result<Self> {
        if net1.spec() != net2.spec() {
            return Err(Error::InvalidSpec("peer networks must share one spec".into()));
        }
        let states = [SgdState::new(net1.len()), SgdState::new(net2.len())];
        Ok(Self {
            nets: [net1, net2],
            states,
        })
    }

    /// Two independently initialized networks.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Self::new(init_model(spec, init_seed(seed, 1))?, init_model(spec, init_seed(seed, 2))?)
    }

    pub fn spec(&self) -> &ModelSpec {
        self.nets[0].spec()
    }
}

/// Number of samples kept from a batch of `batch_len`.
pub fn selection_size(batch_len: usize, alpha: f64) -> usize {
    ((alpha * batch_len as f64).round() as usize).clamp(1, batch_len.max(1))
}

/// Ids of the `max(1, round(alpha * |batch|))` lowest scores, ties broken by
/// ascending id, returned in selection order.
pub fn select_small_score(batch: &[ScoredSample], alpha: f64) -> Vec<u64> {
    let mut ranked: Vec<ScoredSample> = batch.to_vec();
    ranked.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)));
    ranked.truncate(selection_size(batch.len(), alpha));
    ranked.into_iter().map(|s| s.id).collect()
}

/// What happened in one mini-batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSelection {
    pub batch: usize,
    pub ids: Vec<u64>,
    /// `selected[k]`: ids network `k` picked by its own scores.
    pub selected: [Vec<u64>; 2],
    /// `updated_on[k]`: ids network `k` took its gradient step on.
    pub updated_on: [Vec<u64>; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetEpochStats {
    pub mean_loss: f64,
    pub train_acc: f64,
    pub train_dic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub nets: [NetEpochStats; 2],
    pub batches: Vec<BatchSelection>,
}

fn at(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::Numerical { location, detail } => Error::Numerical {
            location: format!("co-training epoch {epoch}, batch {batch}, {location}"),
            detail,
        },
        other => other,
    }
}

/// One epoch of cross-updated training. During warm-up epochs every sample
/// is selected.
pub fn cotrain_epoch(mut pair: PeerPair, train: &Dataset, cfg: &TrainConfig, epoch: usize) -> Result<(PeerPair, EpochTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let alpha = if epoch < cfg.warmup_epochs { 1.0 } else { cfg.alpha };
    let views = train.training_views();
    let order = epoch_order(cfg.seed, epoch, views.len());
    let mut loss_sums = [0.0; 2];
    let mut batches = Vec::new();

    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let members: Vec<_> = chunk.iter().map(|&i| &views[i]).collect();
        // score under the weights as they stand before this batch's updates
        let mut traces = Vec::with_capacity(2);
        let mut selected: [Vec<u64>; 2] = Default::default();
        for (net, pick) in pair.nets.iter().zip(selected.iter_mut()) {
            let t = members
                .iter()
                .map(|v| forward_traced(net, v.image))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| at(epoch, b, e))?;
            let scores = members
                .iter()
                .zip(&t)
                .map(|(v, tr)| {
                    corruption_score(tr.probs(), v.mask, cfg.prob_clamp).map(|score| ScoredSample { id: v.id, score })
                })
                .collect::<Result<Vec<_>>>()?;
            *pick = select_small_score(&scores, alpha);
            traces.push(t);
        }

        let mut updated_on: [Vec<u64>; 2] = Default::default();
        for k in 0..2 {
            let peer_pick = &selected[1 - k];
            let batch: Vec<_> = peer_pick
                .iter()
                .map(|id| {
                    let pos = members.iter().position(|v| v.id == *id).expect("selection comes from this batch");
                    (members[pos], &traces[k][pos])
                })
                .collect();
            let PeerPair { nets, states } = &mut pair;
            loss_sums[k] += apply_batch(&mut nets[k], &mut states[k], &batch, cfg).map_err(|e| at(epoch, b, e))?;
            updated_on[k] = peer_pick.clone();
        }

        batches.push(BatchSelection {
            batch: b,
            ids: members.iter().map(|v| v.id).collect(),
            selected,
            updated_on,
        });
    }

    let n_batches = batches.len() as f64;
    let mut stats = Vec::with_capacity(2);
    for (net, loss_sum) in pair.nets.iter().zip(loss_sums) {
        let m = train_set_metrics(net, train)?;
        stats.push(NetEpochStats {
            mean_loss: loss_sum / n_batches,
            train_acc: m.acc,
            train_dic: m.dic,
        });
    }
    let nets: [NetEpochStats; 2] = stats.try_into().expect("two networks");
    Ok((pair, EpochTrace { epoch, nets, batches }))
}

/// Full co-training run from a fresh pair.
pub fn cotrain(spec: &ModelSpec, train: &Dataset, cfg: &TrainConfig) -> Result<(PeerPair, Vec<EpochTrace>)> {
    let mut pair = PeerPair::init(spec, cfg.seed)?;
    let mut traces = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (next, trace) = cotrain_epoch(pair, train, cfg, epoch)?;
        pair = next;
        traces.push(trace);
    }
    Ok((pair, traces))
}

/// Per-sample corruption score averaged over the two networks.
pub fn score_dataset(net1: &ModelParams, net2: &ModelParams, dataset: &Dataset, clamp: f64) -> Result<Vec<ScoredSample>> {
    dataset
        .training_views()
        .iter()
        .map(|v| {
            let s1 = corruption_score(&forward(net1, v.image)?, v.mask, clamp)?;
            let s2 = corruption_score(&forward(net2, v.image)?, v.mask, clamp)?;
            Ok(ScoredSample {
                id: v.id,
                score: 0.5 * (s1 + s2),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(pairs: &[(u64, f64)]) -> Vec<ScoredSample> {
        pairs.iter().map(|&(id, score)| ScoredSample { id, score }).collect()
    }

    #[test]
    fn selects_smallest_scores() {
        let batch = scored(&[(0, 0.3), (1, 2.1), (2, 0.1), (3, 5.0)]);
        assert_eq!(select_small_score(&batch, 0.5), vec![2, 0]);
        assert_eq!(select_small_score(&batch, 1.0).len(), 4);
    }

    #[test]
    fn ties_break_by_id() {
        let batch = scored(&[(4, 1.0), (7, 1.0), (9, 1.0), (2, 1.0)]);
        assert_eq!(select_small_score(&batch, 0.5), vec![2, 4]);
    }

    #[test]
    fn at_least_one_selected() {
        let batch = scored(&[(4, 1.0), (7, 2.0), (9, 3.0)]);
        assert_eq!(select_small_score(&batch, 0.01), vec![4]);
        assert_eq!(selection_size(8, 0.5), 4);
        assert_eq!(selection_size(8, 0.7), 6);
        assert_eq!(selection_size(3, 0.5), 2);
    }
}
