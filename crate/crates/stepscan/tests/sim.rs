// SPDX-License-Identifier: MIT OR Apache-2.0

use stepscan::segment::Speedup;
use stepscan::sim::{
    gen_trended, match_detections, rep_rng, run_calibration, run_detection_study, Generator, JumpLaw, Procedure,
    Scenario, TrendSpec,
};
use stepscan::stats::{SegmentModel, VariancePolicy};

fn steps() -> SegmentModel {
    SegmentModel::new(vec![60, 140], vec![0.0, 1.0, -0.5], 200).unwrap()
}

#[test]
fn zero_trend_is_the_plain_generator() {
    let flat = TrendSpec { amplitude: 0.0, frequency: 0.1, random_phase: true };
    let a = gen_trended(&steps(), 1.0, &flat, 9).unwrap();
    let plain = Generator::Fixed { model: steps(), sigmas: vec![1.0], trend: None };
    let b = plain.draw(&mut rep_rng(9, 0)).unwrap();
    assert_eq!(a.values(), &b.values[..]);
}

#[test]
fn trended_means_follow_the_sinusoid() {
    let trend = TrendSpec { amplitude: 0.2, frequency: 0.1, random_phase: false };
    let model = steps();
    let reps = 200;
    let mut total = 0.0;
    for seed in 0..reps {
        total += gen_trended(&model, 1.0, &trend, seed).unwrap().values().iter().sum::<f64>();
    }
    let m = model.mean_profile().len();
    let want: f64 = model
        .mean_profile()
        .iter()
        .enumerate()
        .map(|(t, mu)| mu + 0.2 * (0.1 * (t + 1) as f64).sin())
        .sum();
    let se = (m as f64 * reps as f64).sqrt();
    assert!((total / reps as f64 - want).abs() * reps as f64 <= 3.0 * se, "{} vs {want}", total / reps as f64);
}

#[test]
fn segment_marginals() {
    let g = Generator::Fixed { model: steps(), sigmas: vec![1.0, 2.0, 0.5], trend: None };
    let mut rng = rep_rng(1, 0);
    let mut sums = [0.0f64; 3];
    let mut squares = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for _ in 0..50 {
        let d = g.draw(&mut rng).unwrap();
        for (t, v) in d.values.iter().enumerate() {
            let seg = usize::from(t >= 60) + usize::from(t >= 140);
            sums[seg] += v;
            squares[seg] += v * v;
            counts[seg] += 1;
        }
    }
    for (seg, (mu, sd)) in [(0.0, 1.0), (1.0, 2.0), (-0.5, 0.5)].into_iter().enumerate() {
        let n = counts[seg] as f64;
        let mean = sums[seg] / n;
        let var = squares[seg] / n - mean * mean;
        assert!((mean - mu).abs() <= 3.0 * sd / n.sqrt(), "segment {seg} mean {mean}");
        assert!((var - sd * sd).abs() <= 3.0 * sd * sd * (2.0 / n).sqrt(), "segment {seg} var {var}");
    }
}

#[test]
fn random_changes_respect_spacing() {
    let g = Generator::RandomChanges { n_changes: 6, m: 200, jump: JumpLaw::default(), min_spacing: 12 };
    for rep in 0..30 {
        let d = g.draw(&mut rep_rng(3, rep)).unwrap();
        assert_eq!(d.truth.len(), 6);
        assert!(d.truth.windows(2).all(|w| w[1] - w[0] >= 12), "{:?}", d.truth);
        assert!(d.truth.iter().all(|&t| (1..200).contains(&t)));
    }
}

#[test]
fn matcher_pairs_distinct_points() {
    assert_eq!(match_detections(&[50, 100], &[52, 98], 5), 2);
    assert_eq!(match_detections(&[50, 52], &[51], 5), 1);
    assert_eq!(match_detections(&[50], &[80], 5), 0);
}

#[test]
fn studies_are_reproducible_and_consistent() {
    let scenario = Scenario {
        generator: Generator::RandomChanges { n_changes: 3, m: 300, jump: JumpLaw::default(), min_spacing: 1 },
        reps: 40,
        seed: 17,
        policy: VariancePolicy::Known(1.0),
    };
    let procs = vec![
        Procedure::MinBackground { b: 4.68, m0: 1, m1: None, speedup: Speedup::Pruned },
        Procedure::Cbs { b: 4.25 },
        Procedure::Wbs { b: 4.5, n_intervals: 300 },
    ];
    let a = run_detection_study(&scenario, &procs).unwrap();
    assert_eq!(a, run_detection_study(&scenario, &procs).unwrap());
    for card in &a.cards {
        let wrong = card.truths.iter().zip(&card.detections).filter(|(t, d)| t.len() != d.len()).count();
        assert_eq!(card.correct + wrong, card.reps);
        assert!(card.located <= card.correct);
    }
}

#[test]
fn slow_trend_inflates_interval_false_positives() {
    let trend = TrendSpec { amplitude: 0.7, frequency: 0.03, random_phase: true };
    let null = SegmentModel::new(vec![], vec![0.0], 300).unwrap();
    let scenario = Scenario {
        generator: Generator::Fixed { model: null, sigmas: vec![1.0], trend: Some(trend) },
        reps: 100,
        seed: 4,
        policy: VariancePolicy::Known(1.0),
    };
    let lr = run_calibration(&scenario, &Procedure::MinBackground { b: 4.68, m0: 1, m1: None, speedup: Speedup::Pruned })
        .unwrap();
    let cbs = run_calibration(&scenario, &Procedure::Cbs { b: 4.25 }).unwrap();
    assert!(cbs.over > lr.over, "cbs {} vs lr {}", cbs.over, lr.over);
}
