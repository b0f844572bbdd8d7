use coseg::cotrain::{cotrain, cotrain_epoch, score_dataset, selection_size, PeerPair};
use coseg::data::{make_corpus, Dataset, SceneParams, Split};
use coseg::metrics::evaluate;
use coseg::model::{forward, init_model};
use coseg::noise::{corrupt_dataset, NoiseConfig, NoiseType};
use coseg::objectives::corruption_score;
use coseg::train::{train_fresh, train_single, TrainConfig};
use coseg::ModelSpec;

fn noisy_corpus(n_train: usize) -> Dataset {
    let (train, _) = make_corpus(21, n_train, 2, 32, &SceneParams::default()).unwrap();
    corrupt_dataset(&train, &NoiseConfig { noise_type: NoiseType::TypeI, nol: 0.5, ..Default::default() }).unwrap()
}

fn spec() -> ModelSpec {
    ModelSpec::tiny(32, 32, 2)
}

fn subset(data: &Dataset, ids: &[u64]) -> Dataset {
    let samples = data.samples.iter().filter(|s| ids.contains(&s.id)).cloned().collect();
    Dataset::new(Split::Train, samples).unwrap()
}

#[test]
fn each_network_steps_on_its_peers_selection() {
    let data = noisy_corpus(20);
    let cfg = TrainConfig { epochs: 4, warmup_epochs: 1, alpha: 0.5, ..TrainConfig::default() };
    let (_, traces) = cotrain(&spec(), &data, &cfg).unwrap();
    let mut disagreements = 0;
    for t in &traces {
        for b in &t.batches {
            let expected = if t.epoch < cfg.warmup_epochs { b.ids.len() } else { selection_size(b.ids.len(), cfg.alpha) };
            for k in 0..2 {
                assert_eq!(b.updated_on[k], b.selected[1 - k]);
                assert_eq!(b.updated_on[k].len(), expected);
                assert!(b.selected[k].iter().all(|id| b.ids.contains(id)));
            }
            if b.selected[0] != b.selected[1] {
                disagreements += 1;
            }
        }
    }
    assert!(disagreements > 0, "peers never disagreed, so the cross-update went untested");
}

#[test]
fn cross_update_matches_single_step_on_peer_selection() {
    // one batch covering the whole set: the co-training step of network k must
    // equal a plain step on exactly the samples its peer selected
    let data = noisy_corpus(8);
    let cfg = TrainConfig { batch_size: 8, warmup_epochs: 0, alpha: 0.5, epochs: 1, ..TrainConfig::default() };
    let pair = PeerPair::init(&spec(), cfg.seed).unwrap();
    let inits = pair.nets.clone();
    let (after, trace) = cotrain_epoch(pair, &data, &cfg, 0).unwrap();
    let batch = &trace.batches[0];
    assert_ne!(batch.selected[0], batch.selected[1], "fixture should make the peers disagree");
    for (k, init) in inits.iter().enumerate() {
        let peer_pick = subset(&data, &batch.selected[1 - k]);
        let (expected, _) = train_single(init.clone(), &peer_pick, &cfg).unwrap();
        let own_pick = subset(&data, &batch.selected[k]);
        let (own, _) = train_single(init.clone(), &own_pick, &cfg).unwrap();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let to_peer = dist(after.nets[k].values(), expected.values());
        let to_own = dist(after.nets[k].values(), own.values());
        assert!(to_peer < 1e-12, "network {k} differs from the peer-selection step by {to_peer}");
        assert!(to_own > 1e-9, "network {k} is indistinguishable from a step on its own selection");
    }
}

#[test]
fn identical_peers_with_full_selection_stay_identical() {
    let data = noisy_corpus(12);
    let cfg = TrainConfig { epochs: 3, alpha: 1.0, ..TrainConfig::default() };
    let init = init_model(&spec(), 5).unwrap();
    let mut pair = PeerPair::new(init.clone(), init).unwrap();
    for epoch in 0..cfg.epochs {
        pair = cotrain_epoch(pair, &data, &cfg, epoch).unwrap().0;
        assert_eq!(pair.nets[0], pair.nets[1], "diverged at epoch {epoch}");
    }
}

#[test]
fn cotraining_is_deterministic() {
    let data = noisy_corpus(12);
    let cfg = TrainConfig { epochs: 3, warmup_epochs: 1, alpha: 0.5, ..TrainConfig::default() };
    let (a, ta) = cotrain(&spec(), &data, &cfg).unwrap();
    let (b, tb) = cotrain(&spec(), &data, &cfg).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a.nets, b.nets);
    let (c, _) = cotrain(&spec(), &data, &TrainConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.nets, c.nets);
}

#[test]
fn combined_score_of_equal_networks_is_the_single_score() {
    let data = noisy_corpus(6);
    let net = init_model(&spec(), 8).unwrap();
    let scores = score_dataset(&net, &net, &data, 1e-7).unwrap();
    for (s, sample) in scores.iter().zip(&data.samples) {
        let single = corruption_score(&forward(&net, &sample.image).unwrap(), &sample.mask, 1e-7).unwrap();
        assert_eq!(s.id, sample.id);
        assert_eq!(s.score, single);
    }
}

#[test]
fn single_network_training_is_deterministic() {
    let data = noisy_corpus(10);
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let (a, ha) = train_fresh(&spec(), &data, &cfg).unwrap();
    let (b, hb) = train_fresh(&spec(), &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn clean_training_reaches_high_held_out_dice() {
    let (train, test) = make_corpus(3, 64, 32, 32, &SceneParams::default()).unwrap();
    let (params, history) = train_fresh(&spec(), &train, &TrainConfig::default()).unwrap();
    assert_eq!(history.len(), 60);
    let result = evaluate(&params, &test).unwrap();
    assert!(result.dic >= 0.95, "held-out Dice {:.4} below 0.95", result.dic);
}
