use std::f64::consts::LN_2;

use proptest::prelude::*;
use thermo_core::examples::*;
use thermo_core::interval_map::PiecewiseMonotoneMap;

/// `sum_{n<=terms} e^{s_n}` plus the integral bound on the remainder, for `gamma = 2`.
fn brute_series(f: &StepFamily, terms: usize) -> f64 {
    let mut s = 0.0;
    let mut acc = 0.0;
    for n in 1..=terms {
        s += f.a(n - 1);
        acc += f64::exp(s);
    }
    let k = f.switch.unwrap() as f64;
    // e^{s_n} = e^{Kb} ((K+1)/(n+1))^2 for n > K
    acc + (k * f.b).exp() * (k + 1.0).powi(2) / (terms as f64 + 1.5)
}

#[test]
fn critical_parameter_is_frozen_and_agrees_with_direct_summation() {
    let c = hk_critical_b(2, 1e-14).unwrap();
    assert!((c.b - (-0.896_287_519_330_047)).abs() < 1e-12);
    assert!(c.below_log2);
    let f = StepFamily::hk(c.b, 2).unwrap();
    assert!((brute_series(&f, 2_000_000) - 1.0).abs() < 1e-9);
}

#[test]
fn two_valued_family_is_critical_at_minus_log2() {
    // sum e^{nb} = e^b / (1 - e^b) = 1 at b = -log 2.
    let c = critical_b(None, 2.0, 1e-14).unwrap();
    assert!((c.b + LN_2).abs() < 1e-12);
    let row = hk_phase(&StepFamily::two_valued(-LN_2).unwrap()).unwrap();
    assert_eq!(row.region, PhaseRegion::CriticalFiniteMean);
}

#[test]
fn series_matches_closed_bound() {
    for (b, k) in [(-0.9, 2), (-1.5, 5), (-3.0, 10)] {
        let r = hk_series(&StepFamily::hk(b, k).unwrap(), 100).unwrap();
        assert!(r.bound_holds, "b = {b}, K = {k}");
        assert!(r.value.lower <= r.value.value && r.value.value <= r.value.upper);
    }
}

#[test]
fn phase_scan_crosses_at_the_critical_parameter() {
    let grid: Vec<f64> = (0..30).map(|i| -1.5 + 0.05 * i as f64).collect();
    let scan = hk_phase_scan(2, &grid).unwrap();
    assert_eq!(scan.boundaries.len(), 1);
    let (lo, hi) = scan.boundaries[0];
    assert!(lo < scan.critical.b && scan.critical.b < hi);
    assert!(scan.rows.iter().all(|(b, r)| (*b > scan.critical.b) == r.pressure_positive));
}

#[test]
fn backward_orbit_matches_forward_map() {
    let map = PiecewiseMonotoneMap::manneville_pomeau(0.3).unwrap();
    let o = mp_backward_orbit(0.3, 200).unwrap();
    // y_1 is the branch split, where the map takes the right branch.
    assert!((o.y[1] + o.y[1].powf(1.3) - 1.0).abs() < 1e-15);
    for n in 2..=200 {
        assert!((map.apply(o.y[n]) - o.y[n - 1]).abs() <= 1e-14 * o.y[n - 1], "n = {n}");
    }
    assert!(o.max_residual < 1e-14);
}

#[test]
fn scheme_first_returns_match_orbits() {
    let alpha = 0.3;
    let map = PiecewiseMonotoneMap::manneville_pomeau(alpha).unwrap();
    let o = mp_backward_orbit(alpha, 400).unwrap();
    let s = mp_scheme(&o, 400).unwrap();
    let y1 = o.y[1];
    for (i, b) in s.branches().iter().enumerate().take(40) {
        let x = 0.5 * (b.lo() + b.hi());
        let mut y = x;
        let mut n = 0;
        loop {
            y = map.apply(y);
            n += 1;
            if y > y1 || n > 100 {
                break;
            }
        }
        assert_eq!(n, b.tau, "branch {i}");
    }
}

#[test]
fn induced_bounds_enclose_birkhoff_sums() {
    let alpha = 0.3;
    let map = PiecewiseMonotoneMap::manneville_pomeau(alpha).unwrap();
    let o = mp_backward_orbit(alpha, 400).unwrap();
    let s = mp_scheme(&o, 400).unwrap();
    let phi = mp_potential(alpha, o.y[6], o.y[3], -1.0).unwrap();
    let ind = mp_induced(&o, &s, &phi).unwrap();
    for (i, b) in s.branches().iter().enumerate().take(30) {
        for t in [0.1, 0.5, 0.9] {
            let mut y = b.lo() + t * (b.hi() - b.lo());
            let mut sum = 0.0;
            for _ in 0..b.tau {
                sum += phi.eval(y);
                y = map.apply(y);
            }
            let (lo, hi) = (ind.induced.branch_inf[i], ind.induced.branch_sup[i]);
            assert!(lo - 1e-9 <= sum && sum <= hi + 1e-9, "branch {i}: {sum} not in [{lo}, {hi}]");
        }
    }
    assert!(ind.c_bound.is_finite());
}

#[test]
fn configuration_is_refused_outside_its_range() {
    assert!(mp_configure_flat_pressure(0.5, -1.0, 50, 500).is_err());
    assert!(mp_configure_flat_pressure(0.3, -0.5, 50, 500).is_err());
}

#[test]
fn harmonic_fit_recovers_a_harmonic_series() {
    let partial: Vec<(usize, f64)> = {
        let mut h = 0.0;
        (1..=500)
            .map(|n| {
                h += 1.0 / (n as f64 + 1.0);
                (n, 3.0 * h + 0.25)
            })
            .collect()
    };
    let (fit, resid) = harmonic_fit(&partial, 10);
    let fit = fit.unwrap();
    assert!((fit.slope - 3.0).abs() < 1e-10 && (fit.intercept - 0.25).abs() < 1e-9);
    assert!(resid < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_s_is_the_running_sum(b in -3.0f64..-0.01, k in 0usize..30, gamma in 0.0f64..4.0) {
        let f = StepFamily::new(b, Some(k), gamma).unwrap();
        let mut s = 0.0;
        for n in 1..80 {
            s += f.a(n - 1);
            prop_assert!((f.s(n) - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn periodic_birkhoff_sums_are_s_n(b in -3.0f64..-0.01, k in 1usize..10, n in 1usize..40) {
        let f = StepFamily::hk(b, k).unwrap();
        let c = hk_cycle(&f, n).unwrap();
        prop_assert!(c.closes);
        prop_assert!((c.exact_sum - f.s(n)).abs() <= 1e-11 * (1.0 + f.s(n).abs()));
        prop_assert!((c.float_sum - c.exact_sum).abs() <= 1e-11 * (1.0 + c.exact_sum.abs()));
    }

    #[test]
    fn series_increases_with_b(b in -4.0f64..-0.8, db in 0.001f64..0.1, k in 2usize..20) {
        let lo = hk_series(&StepFamily::hk(b, k).unwrap(), 64).unwrap().value.value;
        let hi = hk_series(&StepFamily::hk(b + db, k).unwrap(), 64).unwrap().value.value;
        prop_assert!(hi > lo);
    }

    #[test]
    fn orbit_asymptotic_residual_is_bounded(alpha in 0.1f64..0.9) {
        let o = mp_backward_orbit(alpha, 4000).unwrap();
        let d = mp_drift(&o, 100, 4000).unwrap();
        prop_assert!(d.bounded, "{:?}", d);
    }
}
