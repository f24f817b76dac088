use divcap::sim::*;
use divcap_core::barrier::{coeffs_d, j_d};
use divcap_core::{ModelParams, Numerics, RateCap, ValueFunctions};
use proptest::prelude::*;

fn model() -> (ModelParams, RateCap) {
    (ModelParams::new(1.0, 1.0, 2.0, 1.2).unwrap(), RateCap::affine(1.0, 0.5).unwrap())
}

fn cfg(n_paths: u64, dt: f64) -> SimConfig {
    SimConfig { dt, n_paths, seed: 11, bridge: true, ..SimConfig::default() }
}

#[test]
fn antithetic_pairs_reduce_the_standard_error() {
    let (p, cap) = model();
    let plain = cfg(8000, 1e-2);
    let anti = SimConfig { antithetic: true, ..plain };
    let a = estimate_j_d(&p, &cap, 0.5, 0.2, &plain).unwrap();
    let b = estimate_j_d(&p, &cap, 0.5, 0.2, &anti).unwrap();
    assert_eq!(b.n_effective, 4000);
    assert!(b.stderr < a.stderr, "{b:?} {a:?}");
    assert!((a.mean - b.mean).abs() < 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt());
}

#[test]
fn optimal_reflection_level_beats_other_levels() {
    let (p, cap) = model();
    let vf = ValueFunctions::solve(p, &cap, &Numerics::default()).unwrap();
    let b_c = vf.regime.b_c.b;
    let c = cfg(20_000, 2e-3);
    let best = estimate_j_c(&p, &cap, 0.3, b_c, &c).unwrap();
    for b in [0.0, 0.5 * b_c, 3.0 * b_c, b_c + 0.5] {
        let other = estimate_j_c(&p, &cap, 0.3, b, &c).unwrap();
        let se = (best.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        assert!(best.mean >= other.mean - 3.0 * se, "b {b}: {best:?} vs {other:?}");
    }
}

#[test]
fn ruin_transform_decreases_with_initial_surplus() {
    let (p, cap) = model();
    let c = cfg(20_000, 2e-3);
    let mut prev = 1.0;
    for x0 in [0.0, 0.05, 0.2, 0.6] {
        let l = estimate_laplace_tau0(&p, &cap, x0, 0.1, &c).unwrap();
        assert!(l.lower.mean <= l.upper.mean);
        assert!(l.lower.mean <= prev + 3.0 * l.lower.stderr, "x0 {x0}: {} after {prev}", l.lower.mean);
        prev = l.lower.mean;
    }
    assert!(prev < 0.9);
}

#[test]
fn refining_the_step_moves_towards_the_closed_form() {
    let (p, cap) = model();
    let vf = ValueFunctions::solve(p, &cap, &Numerics::default()).unwrap();
    let b = vf.regime.b_d.b;
    let exact = j_d(&vf.problem, &coeffs_d(&vf.problem, b).unwrap(), b).unwrap();
    // without the bridge correction the monitoring bias is large enough to see
    let c = SimConfig { bridge: false, ..cfg(20_000, 4e-3) };
    let ml = estimate_multilevel(&p, &cap, Functional::Jd { b }, b, &c).unwrap();
    let err: Vec<f64> = ml.levels.iter().map(|e| e.mean - exact).collect();
    assert!(err[0] > 0.0 && err[1] > err[0] && err[2] > err[1], "{err:?}");
    assert!(ml.shrinks);
    assert!(ml.agrees_with(exact), "{err:?} tol {}", ml.tolerance());
}

#[test]
fn short_horizons_are_refused() {
    let (p, cap) = model();
    let c = SimConfig { horizon: Some(0.5), ..cfg(10, 1e-2) };
    assert!(matches!(estimate_if(&p, &cap, 0.0, &c), Err(SimError::TruncationTooLoose { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn path_records_are_consistent(seed in any::<u64>(), x0 in 0.0..2.0f64, b in 0.0..1.5f64, s in 0.1..3.0f64, bridge in any::<bool>()) {
        let p = ModelParams::new(0.5, 1.0, 1.5, 1.3).unwrap();
        let cap = RateCap::constant(s).unwrap();
        let c = SimConfig { dt: 1e-2, n_paths: 16, seed, bridge, ..SimConfig::default() };
        for r in simulate_refracted(&p, &cap, b, x0, &c).unwrap() {
            prop_assert!(r.dividends >= 0.0 && r.dividends <= s / p.q * (1.0 + 1e-12));
            prop_assert_eq!(r.injections, 0.0);
            prop_assert!(r.ruin_discount >= 0.0 && r.ruin_discount <= 1.0);
            prop_assert_eq!(r.ruined, r.ruin_discount > 0.0);
        }
        for r in simulate_reflected(&p, &cap, b, x0, &c).unwrap() {
            prop_assert!(!r.ruined);
            prop_assert!(r.dividends >= 0.0 && r.dividends <= s / p.q * (1.0 + 1e-12));
            prop_assert!(r.injections >= 0.0);
        }
    }
}
