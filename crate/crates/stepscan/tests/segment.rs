// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stepscan::pvalue::{solve_threshold, ScanSpec};
use stepscan::segment::{
    pruned_k_schedule, segment_cbs, segment_lr, segment_nz, segment_seq, segment_wbs, SearchConfig, Selection,
    Speedup,
};
use stepscan::stats::{SegmentModel, Sequence, VariancePolicy};

fn noisy(model: &SegmentModel, seed: u64) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = model
        .mean_profile()
        .into_iter()
        .map(|mu| mu + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    Sequence::new(v, VariancePolicy::EstimateDiff).unwrap()
}

fn scenario_one() -> SegmentModel {
    SegmentModel::new(vec![138, 199, 208, 232], vec![0.0, 0.75, 2.5, 0.25, 1.5], 300).unwrap()
}

#[test]
fn pure_noise_is_mostly_empty() {
    let b = solve_threshold(&ScanSpec::lr(200), 0.05).unwrap().b;
    let null = SegmentModel::new(vec![], vec![0.0], 200).unwrap();
    let empty = (0..200)
        .filter(|&s| segment_lr(&noisy(&null, s), &SearchConfig::new(b).with_speedup(Speedup::Pruned)).unwrap().is_empty())
        .count();
    assert!(empty >= 188, "{empty}/200 empty");
}

#[test]
fn large_changes_are_located() {
    let model = scenario_one();
    let mut found = 0;
    for seed in 0..20 {
        let seg = segment_lr(&noisy(&model, seed), &SearchConfig::new(4.68)).unwrap();
        let cps = seg.change_points();
        if [199, 208].iter().all(|t| cps.iter().any(|c| c.abs_diff(*t) <= 5)) {
            found += 1;
        }
    }
    assert!(found >= 16, "{found}/20");
}

#[test]
fn every_procedure_respects_the_sequence() {
    let model = scenario_one();
    let seq = noisy(&model, 3);
    let cfg = SearchConfig::new(4.3).with_seed(5);
    let segs = [
        segment_lr(&seq, &cfg).unwrap(),
        segment_seq(&seq, &SearchConfig::new(4.21)).unwrap(),
        segment_nz(&seq, &(1..=30).collect::<Vec<_>>(), 4.27).unwrap(),
        segment_cbs(&seq, 4.23, 0.0, &cfg).unwrap(),
        segment_cbs(&seq, 1.51, 1.0, &cfg).unwrap(),
        segment_wbs(&seq, 4.5, 500, 5).unwrap(),
    ];
    for seg in &segs {
        let cps = seg.change_points();
        assert!(cps.windows(2).all(|w| w[0] < w[1]), "{}: {cps:?}", seg.procedure);
        assert!(cps.iter().all(|&c| (1..300).contains(&c)), "{}: {cps:?}", seg.procedure);
        assert!(!cps.is_empty(), "{}", seg.procedure);
        for d in &seg.detections {
            assert!(d.i < d.j && d.j < d.k && d.k <= 300);
        }
    }
}

#[test]
fn accepted_backgrounds_do_not_overlap() {
    let seq = noisy(&scenario_one(), 9);
    for selection in [Selection::ShortestBackground, Selection::LargestZ] {
        let seg = segment_lr(&seq, &SearchConfig::new(4.0).with_selection(selection)).unwrap();
        for w in seg.detections.windows(2) {
            assert!(w[0].j <= w[1].i || w[1].j >= w[0].k, "{:?}", seg.detections);
        }
    }
}

#[test]
fn seeded_procedures_repeat() {
    let seq = noisy(&scenario_one(), 11);
    let a = segment_wbs(&seq, 4.5, 300, 77).unwrap();
    let b = segment_wbs(&seq, 4.5, 300, 77).unwrap();
    assert_eq!(a, b);
    let cfg = SearchConfig::new(4.23).with_seed(4);
    assert_eq!(segment_cbs(&seq, 4.23, 0.0, &cfg).unwrap(), segment_cbs(&seq, 4.23, 0.0, &cfg).unwrap());
}

#[test]
fn bounded_background_limits_reach() {
    let seq = noisy(&scenario_one(), 2);
    let mut cfg = SearchConfig::new(4.0).with_bounds(1, 20);
    cfg.m0 = 2;
    for d in segment_lr(&seq, &cfg).unwrap().detections {
        assert!(d.j - d.i >= 2 && d.k - d.i <= 20, "{d:?}");
    }
}

proptest! {
    #[test]
    fn schedule_shape(j in 0usize..500, span in 0usize..2000) {
        let k_max = j + span;
        let ks = pruned_k_schedule(j, k_max);
        prop_assert_eq!(ks.first().copied(), if span > 0 { Some(j + 1) } else { None });
        prop_assert!(ks.iter().all(|&k| k > j && k <= k_max));
        for w in ks.windows(2) {
            prop_assert_eq!(w[1] - w[0], ((w[0] - j) / 10).max(1));
        }
        // Short backgrounds are never skipped.
        let dense = (j + 1..=k_max.min(j + 20)).collect::<Vec<_>>();
        prop_assert_eq!(&ks[..dense.len()], &dense[..]);
    }

    #[test]
    fn pruning_agrees_on_short_backgrounds(seed in 0u64..10_000) {
        let model = SegmentModel::new(vec![30, 40, 55, 62], vec![0.0, 6.0, 0.5, -5.0, 0.0], 90).unwrap();
        let seq = Sequence::new(noisy(&model, seed).values().to_vec(), VariancePolicy::Known(1.0)).unwrap();
        let exact = segment_lr(&seq, &SearchConfig::new(4.3)).unwrap();
        prop_assume!(exact.detections.iter().all(|d| d.k - d.i < 20));
        let pruned = segment_lr(&seq, &SearchConfig::new(4.3).with_speedup(Speedup::Pruned)).unwrap();
        prop_assert_eq!(exact.change_points(), pruned.change_points());
    }
}
