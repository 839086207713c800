// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};

use stepscan::expfam::{
    a_coefficient, calibrate_meanvar, glr_statistic, pvalue_expfam, sample_family, segment_meanvar,
    signed_root_transform, Family, MeanVarConfig, A_COEFFICIENT_TOL,
};
use stepscan::segment::{segment_lr, SearchConfig};
use stepscan::specialfn::{normal_pdf, nu_series};
use stepscan::stats::{z_lr, Sequence, VariancePolicy};

/// Two-sided Gaussian sum over background lengths with one overshoot factor per side.
fn gaussian_reference(m: usize, m0: usize, m1: usize, b: f64) -> f64 {
    let mut total = 0.0;
    for u in m0..=m1 {
        for v in m0..=m1.min(m - u) {
            let (uf, vf) = (u as f64, v as f64);
            let s = uf + vf;
            let prod = nu_series(b * (vf / (uf * s)).sqrt()).unwrap()
                * nu_series(b * (s / (uf * vf)).sqrt()).unwrap()
                * nu_series(b * (uf / (vf * s)).sqrt()).unwrap();
            total += (m as f64 - s) / (uf * vf * s) * prod;
        }
    }
    0.25 * b.powi(5) * normal_pdf(b) * total
}

#[test]
fn gaussian_case_reduces_to_the_normal_scan() {
    for (m, m1, b) in [(500, 50, 4.71), (200, 30, 4.2)] {
        let got = pvalue_expfam(&Family::Gaussian, 0.0, m, 1, m1, b).unwrap();
        let want = gaussian_reference(m, 1, m1, b);
        assert!((got / want - 1.0).abs() < 1e-5, "{got} vs {want}");
    }
}

#[test]
fn gaussian_ratio_is_half_the_squared_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = Normal::new(0.3, 1.0).unwrap().sample_iter(&mut rng).take(40).collect();
    let seq = Sequence::new(x, VariancePolicy::Known(1.0)).unwrap();
    for (i, j, k) in [(0, 10, 40), (5, 6, 9), (12, 30, 33)] {
        let z = z_lr(&seq, i, j, k).unwrap();
        assert!((glr_statistic(&seq, &Family::Gaussian, i, j, k).unwrap() - 0.5 * z * z).abs() < 1e-10);
    }
}

#[test]
fn exponential_and_inverse_gaussian_levels() {
    let exp = Family::Exponential;
    for (m1, b, want) in [(50, 4.72, 0.049), (100, 4.78, 0.048)] {
        let p = pvalue_expfam(&exp, -1.0, 500, 1, m1, b).unwrap();
        assert!((p - want).abs() <= 0.003, "{p} vs {want}");
    }
    let ig = Family::inverse_gaussian(1.0).unwrap();
    let theta = ig.theta_from_mean(1.0).unwrap();
    assert!(pvalue_expfam(&ig, theta, 300, 1, 300 - 1, 4.5).unwrap() > 0.0);
}

#[test]
fn overshoot_constants_are_symmetric_fractions() {
    for fam in [Family::Gaussian, Family::Exponential, Family::inverse_gaussian(2.0).unwrap()] {
        let t0 = fam.theta_from_mean(1.0).unwrap();
        let t1 = fam.theta_from_mean(1.8).unwrap();
        let a = a_coefficient(&fam, t0, t1, A_COEFFICIENT_TOL).unwrap();
        let b = a_coefficient(&fam, t1, t0, A_COEFFICIENT_TOL).unwrap();
        assert!(a > 0.0 && a <= 1.0, "{fam:?}: {a}");
        assert!((a - b).abs() < 1e-7, "{fam:?}: {a} vs {b}");
    }
}

#[test]
fn grouped_bernoulli_scores_are_standardised() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let groups = 10_000;
    let x: Vec<f64> = Bernoulli::new(0.5)
        .unwrap()
        .sample_iter(&mut rng)
        .take(33 * groups)
        .map(f64::from)
        .collect();
    let seq = Sequence::new(x, VariancePolicy::Known(1.0)).unwrap();
    let scores = signed_root_transform(&seq, &Family::Bernoulli, 33).unwrap();
    let s = scores.values();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 3.0 / n.sqrt(), "{mean}");
    assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "{var}");
}

#[test]
fn degenerate_segments_are_reported() {
    let seq = Sequence::new(vec![0.0; 10], VariancePolicy::Known(1.0)).unwrap();
    assert!(glr_statistic(&seq, &Family::Bernoulli, 0, 5, 10).is_err());
    assert!(pvalue_expfam(&Family::Poisson, 0.0, 100, 1, 10, 4.0).is_err());
}

#[test]
fn meanvar_calibration_near_analytic() {
    let cal = calibrate_meanvar(200, &MeanVarConfig::default()).unwrap();
    assert!((cal.calibrated - 4.97).abs() < 0.15, "{cal:?}");
    assert!(cal.analytic > 4.5 && cal.analytic < 5.5);
}

#[test]
fn variance_changes_favour_the_joint_scan() {
    let config = MeanVarConfig { threshold: Some(4.97), ..MeanVarConfig::default() };
    let (mut joint, mut mean_only) = (0, 0);
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..200)
            .map(|t| Normal::new(0.0, if t < 100 { 1.0 } else { 2.5 }).unwrap().sample(&mut rng))
            .collect();
        let hit = |cps: Vec<usize>| cps.iter().any(|c| c.abs_diff(100) <= 10);
        let seq = Sequence::new(v, VariancePolicy::EstimateDiff).unwrap();
        joint += usize::from(hit(segment_meanvar(&seq, &config).unwrap().0.change_points()));
        mean_only += usize::from(hit(segment_lr(&seq, &SearchConfig::new(4.55)).unwrap().change_points()));
    }
    assert!(joint > mean_only, "joint {joint} vs mean-only {mean_only}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn likelihood_ratio_is_nonnegative(seed in 0u64..1000, i in 0usize..10, len1 in 1usize..20, len2 in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for fam in [Family::Gaussian, Family::Exponential, Family::inverse_gaussian(1.5).unwrap(), Family::Poisson] {
            let theta = fam.theta_from_mean(2.0).unwrap();
            let x = sample_family(&fam, theta, 50, &mut rng).unwrap();
            let seq = Sequence::new(x, VariancePolicy::Known(1.0)).unwrap();
            if let Ok(l) = glr_statistic(&seq, &fam, i, i + len1, i + len1 + len2) {
                prop_assert!(l >= -1e-12, "{fam:?}: {l}");
            }
        }
    }
}
