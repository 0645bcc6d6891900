use std::f64::consts::PI;

use mtlab::blaschke::{DiscPoint, PoleSequence};
use mtlab::fixtures;
use mtlab::series::CircleGrid;
use mtlab::verify::{
    arc_ratio_summary, ball_cover_count, check_derivative_ratio, check_derivative_ratio_with, check_ball_covering, check_metric_doubling, check_norm_invariance,
    check_phase_asymptotics, check_van_der_corput, phase_asymptotic_ratios, run_named, CheckResult,
    PhaseFamilyMetric,
};
use num_complex::Complex64;

fn dp(r: f64, t: f64) -> DiscPoint {
    DiscPoint::from_polar(r, t).unwrap()
}

#[test]
fn derivative_band_flags_a_tightened_band() {
    assert!(check_derivative_ratio(0).passed());
    let s = arc_ratio_summary(2..=12, 2.0 * PI / 4096.0, 0);
    let (a, b, c) = fixtures::DERIVATIVE_BAND;
    for band in [(2.0 * s.min_lower, b, c), (a, 0.5 * s.max_upper, c), (a, b, 0.5 * s.max_ratio)] {
        let res = check_derivative_ratio_with(0, band);
        assert!(!res.passed(), "{band:?}: {res:?}");
    }
}

#[test]
fn van_der_corput_stays_bounded_towards_the_circle() {
    let g = |x: f64| Complex64::new(1.0 + x, 0.0);
    for k in 2..=10 {
        let gap = 0.5f64.powi(k);
        let poles = vec![dp(1.0 - gap, 0.0), dp(1.0 - 2.0 * gap, 0.3 * gap)];
        let res = check_van_der_corput(&poles, (0.0, 0.5 * gap), &g, 1.0).unwrap();
        assert!(res.passed(), "k = {k}: {res:?}");
    }
}

#[test]
fn phase_asymptotics_prefer_two_over_j() {
    for k in [4, 6, 8, 10] {
        let r = 1.0 - 0.5f64.powi(k);
        let (r1, r2) = phase_asymptotic_ratios(r, 1 << k).unwrap();
        assert!(r2 < r1, "k = {k}: {r1} vs {r2}");
        let res = check_phase_asymptotics(r, 1 << k).unwrap();
        assert_eq!(res.parameters["best_c"], 2);
        assert!(res.passed(), "{res:?}");
    }
}

#[test]
fn metric_doubling_of_halved_interval() {
    let poles = PoleSequence::new((0..6).map(|k| dp(0.95, 0.01 * k as f64)).collect());
    let outer = (-0.025, 0.025);
    for (p, q) in [(0, 1), (1, 5)] {
        let d_i = PhaseFamilyMetric { interval: outer, p, q }.distance(&poles).unwrap();
        let d_j = PhaseFamilyMetric { interval: (-0.0125, 0.0125), p, q }.distance(&poles).unwrap();
        let ratio = d_i / d_j;
        assert!(ratio > 2.0 / fixtures::METRIC_DOUBLING_C0 && ratio < 2.0 * fixtures::METRIC_DOUBLING_C0);
        let res = check_metric_doubling(&poles, p, q, outer, (-0.0125, 0.0125)).unwrap();
        assert!(res.passed(), "{res:?}");
    }
    assert!(check_metric_doubling(&poles, 0, 1, outer, (-0.03, 0.0)).is_err());
    assert!(check_metric_doubling(&poles, 0, 1, (-0.5, 0.5), (-0.1, 0.1)).is_err());
}

#[test]
fn ball_cover_grows_linearly_for_uniform_poles() {
    let poles = PoleSequence::new((0..128).map(|k| dp(0.9, -0.3 + 0.6 * k as f64 / 127.0)).collect());
    let interval = (-0.05, 0.05);
    let counts: Vec<usize> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&l| ball_cover_count(&poles, 64, interval, l).unwrap())
        .collect();
    for w in counts.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        assert!(ratio > 1.5 && ratio < 2.5, "{counts:?}");
    }
    let res = check_ball_covering(&poles, 64, interval, 1.0).unwrap();
    assert!(res.passed(), "{res:?}");
    assert!(check_ball_covering(&poles, 64, interval, 0.5).is_err());
}

#[test]
fn norm_invariance_under_refinement() {
    let poles = PoleSequence::new(vec![dp(0.6, 0.3), dp(0.4, -2.0), dp(0.7, 1.5), dp(0.2, 0.0)]);
    let b = DiscPoint::new(Complex64::new(-0.2, 0.35)).unwrap();
    let gaps: Vec<f64> = [128, 256]
        .iter()
        .map(|&n| {
            let res = check_norm_invariance(&poles, b, CircleGrid::new(n).unwrap(), 3).unwrap();
            assert!(res.passed(), "{res:?}");
            assert!(res.parameters["oracle_gap"].as_f64().unwrap() < 1e-5);
            res.measured_constant
        })
        .collect();
    assert!(gaps[1] < 0.05 && gaps[0] < 0.05, "{gaps:?}");
    let many = PoleSequence::new(vec![dp(0.1, 0.0); 9]);
    assert!(check_norm_invariance(&many, b, CircleGrid::new(128).unwrap(), 0).is_err());
}

#[test]
fn suite_is_deterministic_and_serializable() {
    let names = ["check_mobius_composition", "check_phase_asymptotics", "check_derivative_ratio"];
    let first = run_named(&names, 11).unwrap();
    let second = run_named(&names, 11).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), names);
    let text = serde_json::to_string(&first).unwrap();
    let back: Vec<CheckResult> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, first);
}
