// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use stepscan::stats::{
    estimate_sigma, noncentrality_meanvar, variance_estimates, z_cbs, z_lr, z_meanvar, z_nz, SegmentModel,
    Sequence, VariancePolicy,
};
use stepscan::Error;

fn known(v: Vec<f64>) -> Sequence {
    Sequence::new(v, VariancePolicy::Known(1.0)).unwrap()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[test]
fn contrast_is_a_scaled_mean_difference() {
    let x = vec![0.3, -1.2, 2.2, 0.9, 1.7, -0.4, 3.1, 2.8, 0.0];
    let (i, j, k) = (1, 4, 9);
    let (u, v) = ((j - i) as f64, (k - j) as f64);
    let want = (mean(&x[i..j]) - mean(&x[j..k])) * (u * v / (u + v)).sqrt() / 2.0;
    let seq = Sequence::new(x, VariancePolicy::Known(4.0)).unwrap();
    assert!((z_lr(&seq, i, j, k).unwrap() - want).abs() < 1e-13);
}

#[test]
fn symmetric_window_by_hand() {
    let x: Vec<f64> = vec![1.0, 2.0, 0.5, 4.0, 3.0, 2.5, 0.0];
    let (j, h) = (3usize, 2usize);
    let want = ((x[3] + x[4]) - (x[1] + x[2])).abs() / 2.0;
    assert!((z_nz(&known(x), j, h).unwrap() - want).abs() < 1e-14);
}

#[test]
fn interval_contrast_penalty_lowers_value() {
    let x: Vec<f64> = (0..40).map(|t| if (10..18).contains(&t) { 2.0 } else { (t % 3) as f64 * 0.1 }).collect();
    let seq = known(x);
    let plain = z_cbs(&seq, 0, 40, 10, 18, 0.0).unwrap();
    let pen = z_cbs(&seq, 0, 40, 10, 18, 1.0).unwrap();
    assert!(plain > 4.0 && pen < plain);
    assert!(matches!(z_cbs(&seq, 0, 40, 0, 40, 0.0), Err(Error::Degenerate(_))));
}

#[test]
fn variance_estimators() {
    let x = [1.0, 3.0, 2.0, 6.0];
    let est = variance_estimates(&x).unwrap();
    assert!((est.diff - (4.0 + 1.0 + 16.0) / 6.0).abs() < 1e-15);
    assert!((est.sample - 14.0 / 3.0).abs() < 1e-15);
    let seq = Sequence::new(x.to_vec(), VariancePolicy::EstimateDiff).unwrap();
    assert!((estimate_sigma(&seq).unwrap() - est.diff.sqrt()).abs() < 1e-15);
}

#[test]
fn constant_data_is_degenerate() {
    let seq = Sequence::new(vec![2.0; 10], VariancePolicy::EstimateDiff).unwrap();
    assert!(matches!(seq.sigma(), Err(Error::Degenerate(_))));
    assert!(matches!(z_meanvar(&known(vec![1.0; 10]), 0, 4, 10, 2.7), Err(Error::Degenerate(_))));
    assert!(Sequence::new(vec![1.0, f64::NAN], VariancePolicy::EstimateDiff).is_err());
}

#[test]
fn model_profile_and_deltas() {
    let model = SegmentModel::from_deltas(vec![2, 5], &[1.5, -0.5], 7).unwrap();
    assert_eq!(model.mean_profile(), vec![0.0, 0.0, 1.5, 1.5, 1.5, 1.0, 1.0]);
    assert_eq!(model.deltas(), vec![1.5, -0.5]);
    assert!(SegmentModel::new(vec![5, 2], vec![0.0, 1.0, 0.0], 7).is_err());
}

#[test]
fn noncentrality_vanishes_without_change() {
    assert_eq!(noncentrality_meanvar(0.3, 0.0, 0.0).unwrap(), 0.0);
    assert!(noncentrality_meanvar(0.3, 1.0, 0.0).unwrap() > 0.0);
    assert!(noncentrality_meanvar(1.0, 1.0, 0.0).is_err());
}

proptest! {
    #[test]
    fn contrast_is_odd_and_shift_invariant(
        x in prop::collection::vec(-5.0f64..5.0, 4..40),
        shift in -10.0f64..10.0,
        a in 0usize..1000, b in 0usize..1000, c in 0usize..1000,
    ) {
        let m = x.len();
        let mut p = [a % (m + 1), b % (m + 1), c % (m + 1)];
        p.sort_unstable();
        prop_assume!(p[0] < p[1] && p[1] < p[2]);
        let (i, j, k) = (p[0], p[1], p[2]);
        let z = z_lr(&known(x.clone()), i, j, k).unwrap();
        let neg = z_lr(&known(x.iter().map(|v| -v).collect()), i, j, k).unwrap();
        let moved = z_lr(&known(x.iter().map(|v| v + shift).collect()), i, j, k).unwrap();
        prop_assert!((z + neg).abs() < 1e-9);
        prop_assert!((z - moved).abs() < 1e-8 * (1.0 + z.abs()));
    }

    #[test]
    fn estimated_scale_cancels(x in prop::collection::vec(-5.0f64..5.0, 6..40), scale in 0.1f64..20.0) {
        let m = x.len();
        prop_assume!(variance_estimates(&x).unwrap().diff > 1e-6);
        let a = Sequence::new(x.clone(), VariancePolicy::EstimateDiff).unwrap();
        let b = Sequence::new(x.iter().map(|v| v * scale).collect(), VariancePolicy::EstimateDiff).unwrap();
        let (za, zb) = (z_lr(&a, 0, m / 2, m).unwrap(), z_lr(&b, 0, m / 2, m).unwrap());
        prop_assert!((za - zb).abs() < 1e-9 * (1.0 + za.abs()));
    }

    #[test]
    fn meanvar_is_nonnegative(x in prop::collection::vec(-5.0f64..5.0, 8..40)) {
        let m = x.len();
        if let Ok(v) = z_meanvar(&known(x), 0, m / 2, m, 2.7) {
            prop_assert!(v >= 0.0);
        }
    }
}
