// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use stepscan::power::{cbs_power, local_power, marginal_power, PowerSpec};
use stepscan::specialfn::normal_sf;

#[test]
fn closed_form_cases() {
    let null = PowerSpec::new(0.0, 20, 30, 4.68).unwrap();
    assert!((marginal_power(&null).unwrap() - normal_sf(4.68)).abs() < 1e-15);
    let (h1, h2) = (20.0f64, 30.0f64);
    let delta = 4.0 / (h1 * h2 / (h1 + h2)).sqrt();
    let edge = PowerSpec::new(delta, 20, 30, 4.0).unwrap();
    assert!((marginal_power(&edge).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn scenario_powers() {
    for (delta, h1, h2, want) in [(0.75, 138, 61, 0.77), (1.75, 61, 9, 0.73), (2.25, 9, 24, 0.91), (1.25, 24, 68, 0.85)] {
        let p = local_power(&PowerSpec::new(delta, h1, h2, 4.68).unwrap()).unwrap();
        assert!((p - want).abs() <= 0.03, "delta {delta}: {p} vs {want}");
    }
}

#[test]
fn saturation_and_decay() {
    let b = 4.5;
    let spec = PowerSpec::new(3.0 * b, 10, 10, b).unwrap();
    assert!(local_power(&spec).unwrap() > 0.999_999);
    let gains: Vec<f64> = [4.0, 6.0, 8.0]
        .iter()
        .map(|&b| {
            let s = PowerSpec::new(1.0, 15, 15, b).unwrap();
            local_power(&s).unwrap() - marginal_power(&s).unwrap()
        })
        .collect();
    assert!(gains[0] > gains[1] && gains[1] > gains[2] && gains[2] >= 0.0, "{gains:?}");
}

#[test]
fn pulse_power() {
    let p: Vec<f64> = [5, 10, 20, 40].iter().map(|&n| cbs_power(1.0, n, 4.13).unwrap()).collect();
    assert!(p.windows(2).all(|w| w[1] > w[0]), "{p:?}");
    assert!(cbs_power(0.0, 10, 4.13).unwrap() < 3.0 * 0.05);
    assert!(PowerSpec::new(1.0, 0, 5, 4.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn powers_are_ordered_probabilities(
        delta in 0.0f64..3.0,
        more in 0.01f64..1.0,
        h1 in 2usize..150,
        h2 in 2usize..150,
        b in 3.0f64..6.0,
    ) {
        let spec = PowerSpec::new(delta, h1, h2, b).unwrap();
        let (marg, local) = (marginal_power(&spec).unwrap(), local_power(&spec).unwrap());
        prop_assert!((0.0..=1.0).contains(&marg) && (0.0..=1.0).contains(&local));
        prop_assert!(local >= marg);
        let stronger = PowerSpec::new(delta + more, h1, h2, b).unwrap();
        prop_assert!(local_power(&stronger).unwrap() >= local - 1e-9);
    }
}
