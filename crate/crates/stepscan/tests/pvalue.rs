// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use stepscan::pvalue::{
    pvalue, pvalue_cbs_multi, pvalue_lr, pvalue_nz, pvalue_seq, solve_threshold, Constraint, ScanSpec,
};
use stepscan::Error;

fn close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "got {got}, want {want} ± {tol}");
}

#[test]
fn bounded_background_rows() {
    close(pvalue_lr(&ScanSpec::lr(500).with_bounds(1, 50), 4.71).unwrap(), 0.05, 0.002);
    close(pvalue_lr(&ScanSpec::lr(500).with_bounds(1, 499), 4.83).unwrap(), 0.05, 0.002);
    close(pvalue_lr(&ScanSpec::lr(300).with_bounds(1, 299), 4.68).unwrap(), 0.05, 0.002);
    close(pvalue_lr(&ScanSpec::lr(400).with_bounds(1, 399), 4.76).unwrap(), 0.051, 0.002);
}

#[test]
fn full_range_ignores_the_constraint() {
    let total = pvalue_lr(&ScanSpec::lr(300), 4.68).unwrap();
    let per_side = pvalue_lr(&ScanSpec::lr(300).with_constraint(Constraint::PerSide), 4.68).unwrap();
    assert_eq!(total, per_side);
}

#[test]
fn anchored_scan() {
    close(pvalue_seq(500, 4.34).unwrap(), 0.051, 0.002);
    close(solve_threshold(&ScanSpec::seq(500), 0.05).unwrap().b, 4.33, 0.03);
    let p: Vec<f64> = [100, 300, 500].iter().map(|&m| pvalue_seq(m, 4.3).unwrap()).collect();
    assert!(p[0] < p[1] && p[1] < p[2], "{p:?}");
}

#[test]
fn symmetric_window_scan() {
    let w: Vec<usize> = (1..=30).collect();
    close(pvalue_nz(500, &w, 4.42).unwrap(), 0.05, 0.005);
    close(pvalue_nz(300, &w, 4.27).unwrap(), 0.05, 0.005);
}

#[test]
fn symmetric_window_terms_by_hand() {
    // One window: 1.5 m b^3 phi(b) nu(b sqrt(3/h)) nu(b sqrt(1/h)) / h^2.
    let (m, h, b) = (200usize, 10usize, 4.0f64);
    let nu = |x: f64| stepscan::specialfn::nu(x).unwrap();
    let hf = h as f64;
    let want = 1.5 * m as f64 * b.powi(3) * (-0.5 * b * b).exp() / (2.0 * std::f64::consts::PI).sqrt()
        * nu(b * (3.0 / hf).sqrt())
        * nu(b * (1.0 / hf).sqrt())
        / (hf * hf);
    close(pvalue_nz(m, &[h], b).unwrap(), want, 1e-14);
}

#[test]
fn interval_scans() {
    close(pvalue_cbs_multi(300, 1, 299, 4.23, 0.0, 1).unwrap(), 0.05, 0.005);
    close(pvalue_cbs_multi(300, 1, 299, 1.51, 1.0, 1).unwrap(), 0.05, 0.005);
    close(pvalue_cbs_multi(500, 1, 499, 4.36, 0.0, 1).unwrap(), 0.05, 0.005);
    close(pvalue_cbs_multi(500, 1, 499, 1.57, 1.0, 1).unwrap(), 0.05, 0.005);
}

#[test]
fn caption_thresholds() {
    for (spec, want) in [
        (ScanSpec::lr(500), 4.83),
        (ScanSpec::seq(300), 4.21),
        (ScanSpec::lr(200), 4.54),
    ] {
        close(solve_threshold(&spec, 0.05).unwrap().b, want, 0.02);
    }
}

#[test]
fn small_thresholds_are_flagged() {
    let r = pvalue(&ScanSpec::lr(500), 2.0).unwrap();
    assert_eq!(r.prob, 1.0);
    assert!(r.raw > 1.0 && !r.trustworthy);
}

#[test]
fn invalid_inputs() {
    assert!(matches!(pvalue(&ScanSpec::lr(100), -1.0), Err(Error::Domain(_))));
    assert!(pvalue(&ScanSpec::lr(100).with_bounds(5, 2), 4.0).is_err());
    assert!(solve_threshold(&ScanSpec::lr(100), 0.7).is_err());
    assert!(matches!(pvalue_cbs_multi(100, 1, 99, 1.0, 0.0, 4), Err(Error::ThresholdTooSmall(_))));
}

fn any_spec() -> impl Strategy<Value = ScanSpec> {
    (50usize..400, 0usize..5, prop::bool::ANY).prop_flat_map(|(m, kind, per_side)| {
        (Just(m), Just(kind), Just(per_side), 1usize..4, 10usize..m)
    })
    .prop_map(|(m, kind, per_side, m0, m1)| {
        let c = if per_side { Constraint::PerSide } else { Constraint::Total };
        match kind {
            0 => ScanSpec::lr(m).with_bounds(m0, m1.max(m0 + 1)).with_constraint(c),
            1 => ScanSpec::seq(m),
            2 => ScanSpec::nz(m, (1..=(m / 10).max(1)).collect()),
            3 => ScanSpec::cbs(m, 0.0),
            _ => ScanSpec::lr_multivariate(m, 2).with_bounds(m0, m1.max(m0 + 1)).with_constraint(c),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decreasing_in_threshold(spec in any_spec(), b in 3.0f64..6.0, step in 0.01f64..0.5) {
        let lo = pvalue(&spec, b).unwrap();
        let hi = pvalue(&spec, b + step).unwrap();
        prop_assume!(lo.raw < 0.5);
        prop_assert!(hi.raw < lo.raw, "{} !< {}", hi.raw, lo.raw);
    }

    #[test]
    fn solver_round_trips(spec in any_spec(), alpha in 0.005f64..0.2) {
        let r = solve_threshold(&spec, alpha).unwrap();
        let back = pvalue(&spec, r.b).unwrap().prob;
        prop_assert!((back - alpha).abs() < 2e-4, "alpha {alpha} -> b {} -> {back}", r.b);
    }

    #[test]
    fn restriction_only_removes_terms(m in 60usize..400, m1 in 5usize..60, b in 3.5f64..5.5) {
        let m1 = m1.min(m - 2);
        let full = pvalue(&ScanSpec::lr(m).with_constraint(Constraint::PerSide), b).unwrap().raw;
        let per_side = pvalue(&ScanSpec::lr(m).with_bounds(1, m1).with_constraint(Constraint::PerSide), b).unwrap().raw;
        let total = pvalue(&ScanSpec::lr(m).with_bounds(1, m1), b).unwrap().raw;
        prop_assert!(total <= per_side && per_side <= full);
    }
}
