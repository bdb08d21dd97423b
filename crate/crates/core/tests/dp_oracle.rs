mod common;

use common::*;
use ctlss::dp::{estimate_modes, markov_mode_loss, segment, sequence_cost, stage_costs};
use ctlss::integral::evaluate_cost;
use ctlss::model::{EstimatedModel, Matrix, ModeLossSpec, ModeSequence, SampledDataset, Vector};
use ctlss::rng::Rng;
use proptest::prelude::*;

#[test]
fn matches_enumeration_two_modes_eight_samples() {
    let (gap, mismatches) = dp_against_enumeration(2, 8, 100, 11);
    assert!(gap <= 1e-12, "relative cost gap {gap:e}");
    assert_eq!(mismatches, 0);
}

#[test]
fn matches_enumeration_three_modes_six_samples() {
    let (gap, mismatches) = dp_against_enumeration(3, 6, 100, 12);
    assert!(gap <= 1e-12, "relative cost gap {gap:e}");
    assert_eq!(mismatches, 0);
}

#[test]
fn ties_resolve_to_lexicographically_smallest_sequence() {
    // integer stage costs with many exact ties
    let mut rng = Rng::new(5);
    for _ in 0..100 {
        let (k, n) = (3, 5);
        let stage = Matrix::from_fn(n, k, |_, _| rng.below(3) as f64);
        let trans = Matrix::from_fn(k, k, |_, _| rng.below(2) as f64);
        let loss = ModeLossSpec::new(vec![0.0; k], vec![0.0; k], trans).unwrap();
        let dp = segment(&stage, &loss);
        let (labels, g) = brute_force(k, n, |s| {
            let seq = ModeSequence::from_labels(s, k).unwrap();
            sequence_cost(&stage, &loss, &seq)
        });
        assert_eq!(dp.labels(), labels);
        assert_eq!(sequence_cost(&stage, &loss, &dp), g);
    }
}

#[test]
fn enormous_switch_cost_freezes_the_mode() {
    let mut rng = Rng::new(8);
    let model = random_model(&mut rng, 2, 2, 1, 1);
    let ds = random_dataset(&mut rng, 60, 1, 1, 0.05);
    let x = random_states(&mut rng, 60, 2);
    let loss = markov_mode_loss(2, 0.1, 1e3, false).unwrap();
    let s = estimate_modes(&model, &x, &ds, 0.01, &loss).unwrap();
    assert_eq!(s.switches(), 0);
}

/// The segmentation scores one-step residuals while the criterion scores
/// the accumulated integral, so the mode block alone can raise the total.
#[test]
fn one_step_segmentation_can_raise_the_accumulated_criterion() {
    let model = EstimatedModel::new(
        vec![Matrix::zeros(1, 1), Matrix::zeros(1, 1)],
        vec![Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, -1.0)],
        Matrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let zero = || Vector::zeros(1);
    let ds = SampledDataset::new(vec![0.0, 1.0, 2.0], vec![Vector::from_element(1, 1.0); 3], vec![zero(); 3]).unwrap();
    let x = vec![zero(), zero(), zero()];
    let loss = ModeLossSpec::zeros(2);
    let previous = ModeSequence::from_labels(&[1, 2, 1], 2).unwrap();
    let next = estimate_modes(&model, &x, &ds, 1.0, &loss).unwrap();
    assert_eq!(next.labels(), vec![1, 1, 1]);
    let before = evaluate_cost(&model, &x, &previous, &ds, 1.0, &loss).unwrap();
    let after = evaluate_cost(&model, &x, &next, &ds, 1.0, &loss).unwrap();
    assert_eq!(before.total, 1.0);
    assert_eq!(after.total, 5.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn markov_loss_is_symmetric_for_two_modes(pi in 0.001f64..0.999, tau in 0.0f64..10.0, literal: bool) {
        let loss = markov_mode_loss(2, pi, tau, literal).unwrap();
        prop_assert_eq!(loss.transition(1, 2), loss.transition(2, 1));
        prop_assert_eq!(loss.transition(1, 1), loss.transition(2, 2));
    }

    #[test]
    fn argmin_invariant_under_joint_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = Rng::new(seed);
        let model = random_model(&mut rng, 3, 2, 1, 1);
        let ds = random_dataset(&mut rng, 30, 1, 1, 0.1);
        let x = random_states(&mut rng, 30, 2);
        let loss = random_mode_loss(&mut rng, 3, 0.1);
        let alpha = 0.5;
        let base = estimate_modes(&model, &x, &ds, alpha, &loss).unwrap();
        let scaled = estimate_modes(&model, &x, &ds, c * alpha, &loss.scaled(c)).unwrap();
        prop_assert_eq!(base.labels(), scaled.labels());
    }

    #[test]
    fn last_label_enters_only_through_the_mode_loss(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let k = 3;
        let n = 12;
        let model = random_model(&mut rng, k, 2, 1, 1);
        let ds = random_dataset(&mut rng, n, 1, 1, 0.1);
        let x = random_states(&mut rng, n, 2);
        let loss = random_mode_loss(&mut rng, k, 0.1);
        let stage = stage_costs(&model, &x, &ds, 0.3);
        prop_assert!(stage.row(n - 1).iter().all(|&v| v == 0.0));
        let mut labels: Vec<usize> = (0..n).map(|_| 1 + rng.below(k)).collect();
        let a = sequence_cost(&stage, &loss, &ModeSequence::from_labels(&labels, k).unwrap());
        let prev = labels[n - 2];
        let old = labels[n - 1];
        let new = 1 + (old % k);
        labels[n - 1] = new;
        let b = sequence_cost(&stage, &loss, &ModeSequence::from_labels(&labels, k).unwrap());
        let expected = loss.mode_cost()[new - 1] - loss.mode_cost()[old - 1]
            + loss.transition(new, prev) - loss.transition(old, prev);
        prop_assert!(((b - a) - expected).abs() <= 1e-12);
    }

    #[test]
    fn segmentation_never_loses_to_the_truth(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let model = random_model(&mut rng, 2, 2, 1, 1);
        let ds = random_dataset(&mut rng, 40, 1, 1, 0.05);
        let x = random_states(&mut rng, 40, 2);
        let loss = random_mode_loss(&mut rng, 2, 0.1);
        let stage = stage_costs(&model, &x, &ds, 1.0);
        let best = sequence_cost(&stage, &loss, &segment(&stage, &loss));
        for _ in 0..20 {
            let other = random_modes(&mut rng, 2, 40);
            prop_assert!(best <= sequence_cost(&stage, &loss, &other) + 1e-12);
        }
    }
}
