mod common;

use coseg::objectives::{corruption_score, cross_entropy_loss, dice_loss};
use coseg::{LabelMask, ProbMap};
use common::{naive_cross_entropy, naive_dice_loss, random_mask, random_probs, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;

const CLAMP: f64 = 1e-7;

fn permute(probs: &ProbMap, mask: &LabelMask, order: &[usize]) -> (ProbMap, LabelMask) {
    let l = probs.num_classes();
    let p: Vec<f64> = order.iter().flat_map(|&i| probs.pixel(i).to_vec()).collect();
    let m: Vec<u8> = order.iter().map(|&i| mask.classes()[i]).collect();
    (
        ProbMap::new(probs.height(), probs.width(), l, p).unwrap(),
        LabelMask::new(mask.height(), mask.width(), l, m).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn objectives_match_naive_loops(seed in any::<u64>(), h in 1usize..7, w in 1usize..7, classes in 2usize..5) {
        let mut r = rng(seed);
        let probs = random_probs(&mut r, h, w, classes);
        let mask = random_mask(&mut r, h, w, classes);
        let ce = cross_entropy_loss(&probs, &mask, CLAMP).unwrap();
        prop_assert!((ce - naive_cross_entropy(&probs, &mask, CLAMP)).abs() <= 1e-10 * ce.abs().max(1.0));
        let dice = dice_loss(&probs, &mask).unwrap();
        prop_assert!((dice - naive_dice_loss(&probs, &mask)).abs() <= 1e-10);
    }

    #[test]
    fn corruption_score_is_cross_entropy_bitwise(seed in any::<u64>()) {
        let mut r = rng(seed);
        let probs = random_probs(&mut r, 4, 4, 3);
        let mask = random_mask(&mut r, 4, 4, 3);
        let a = corruption_score(&probs, &mask, CLAMP).unwrap();
        let b = cross_entropy_loss(&probs, &mask, CLAMP).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn objectives_are_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let probs = random_probs(&mut r, 4, 4, 3);
        let mask = random_mask(&mut r, 4, 4, 3);
        prop_assert!(cross_entropy_loss(&probs, &mask, CLAMP).unwrap() >= 0.0);
        let dice = dice_loss(&probs, &mask).unwrap();
        prop_assert!((0.0..=1.0).contains(&dice));
    }

    #[test]
    fn objectives_are_permutation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let probs = random_probs(&mut r, 4, 4, 3);
        let mask = random_mask(&mut r, 4, 4, 3);
        let mut order: Vec<usize> = (0..16).collect();
        order.shuffle(&mut r);
        let (pp, pm) = permute(&probs, &mask, &order);
        let tol = 1e-12;
        prop_assert!((cross_entropy_loss(&probs, &mask, CLAMP).unwrap() - cross_entropy_loss(&pp, &pm, CLAMP).unwrap()).abs() < tol * 100.0);
        prop_assert!((dice_loss(&probs, &mask).unwrap() - dice_loss(&pp, &pm).unwrap()).abs() < tol);
    }
}

#[test]
fn perfect_prediction_costs_only_the_clamp() {
    let mut r = rng(5);
    let mask = random_mask(&mut r, 4, 4, 3);
    let probs = ProbMap::one_hot(&mask);
    let ce = cross_entropy_loss(&probs, &mask, CLAMP).unwrap();
    assert!((ce - (-16.0 * (1.0 - CLAMP).ln())).abs() < 1e-15);
    assert!(dice_loss(&probs, &mask).unwrap().abs() < 1e-15);
}
