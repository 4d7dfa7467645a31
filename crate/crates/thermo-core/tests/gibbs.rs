use proptest::prelude::*;
use thermo_core::examples::{StepFamily, HK_HORIZON};
use thermo_core::gibbs::*;
use thermo_core::inducing::*;
use thermo_core::potential::Potential;

fn constant_induced(c: f64) -> InducedPotential {
    let s = InducingScheme::doubling_half(HK_HORIZON).unwrap();
    induced_potential(&Potential::constant(c), &s).unwrap()
}

/// `sum_{n>=1} e^{s_n - n p}` by direct summation far past the scheme horizon.
fn hk_renewal_sum(f: &StepFamily, p: f64, terms: usize) -> f64 {
    let mut acc = 0.0;
    let mut s = 0.0;
    for n in 1..=terms {
        s += f.a(n - 1);
        acc += (s - n as f64 * p).exp();
    }
    acc
}

#[test]
fn shift_pressure_of_constant_is_geometric() {
    for c in [-0.2, -1.0, -3.0] {
        let sp = full_shift_pressure(&constant_induced(c), 1);
        // sum_n e^{cn} = e^c / (1 - e^c)
        let exact = (c.exp() / (1.0 - c.exp())).ln();
        assert!(sp.exact && sp.finite);
        assert!((sp.value() - exact).abs() < 1e-12, "c = {c}");
        assert!(sp.estimate.lower <= exact + 1e-12 && exact <= sp.estimate.upper + 1e-12);
    }
    assert!(!full_shift_pressure(&constant_induced(0.1), 1).finite);
}

#[test]
fn hk_pressure_solves_the_renewal_equation() {
    let f = StepFamily::hk(-0.5, 2).unwrap();
    let eq = solve_equilibrium(&f.induced(HK_HORIZON).unwrap(), &EquilibriumOptions::default()).unwrap();
    let p = eq.pressure.value;
    assert!(!eq.pinned && p > 0.0);
    assert!((hk_renewal_sum(&f, p, 20_000) - 1.0).abs() < 1e-10);
    // Frozen from the solver.
    assert!((p - 0.204_331).abs() < 1e-6, "P = {p}");
    assert!(eq.root_residual.abs() < 1e-10);
    let ints = eq.integrals.unwrap();
    assert!(ints.free_energy_gap < 1e-9);
    assert!(ints.entropy > 0.0 && ints.entropy < std::f64::consts::LN_2);
}

#[test]
fn below_critical_parameter_pins_at_zero() {
    let f = StepFamily::hk(-1.2, 2).unwrap();
    let eq = solve_equilibrium(&f.induced(HK_HORIZON).unwrap(), &EquilibriumOptions::default()).unwrap();
    assert!(eq.pinned);
    assert_eq!(eq.pressure.value, 0.0);
    assert_eq!(eq.status, Projectability::NotProjectable);
    assert!(!eq.lambda.is_bounded());
    assert!(eq.integrals.is_none());
    assert!(hk_renewal_sum(&f, 0.0, 20_000) < 1.0);
    assert!(matches!(eq.tails.decay, TailDecay::Polynomial { .. }));
}

#[test]
fn thresholds_follow_the_tail_model() {
    let t = finiteness_threshold(&constant_induced(-0.4)).unwrap();
    assert_eq!(t.value, -0.4);
    assert!(!t.finite_at);
    let hk = StepFamily::hk(-0.5, 2).unwrap().induced(HK_HORIZON).unwrap();
    let t = finiteness_threshold(&hk).unwrap();
    assert_eq!(t.value, 0.0);
    assert!(t.finite_at);
    let unknown = hk.clone().with_tail(TailModel::Unknown);
    assert!(finiteness_threshold(&unknown).is_err());
}

#[test]
fn discriminant_sign_matches_tail_shape() {
    let hk = StepFamily::hk(-0.5, 2).unwrap().induced(HK_HORIZON).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| -0.5 + 0.1 * i as f64).collect();
    let d = discriminant(&hk, &grid).unwrap();
    assert_eq!(d.p_star, 0.0);
    assert!(d.discriminant > 0.0 && d.monotone && d.exponential_tails && d.consistent);

    let below = StepFamily::hk(-1.2, 2).unwrap().induced(HK_HORIZON).unwrap();
    let d = discriminant(&below, &grid).unwrap();
    assert!(d.discriminant <= 0.0);
    assert!(!d.exponential_tails && d.consistent);
}

#[test]
fn tail_table_of_exponential_state() {
    let eq = solve_equilibrium(&constant_induced(0.0), &EquilibriumOptions::default()).unwrap();
    assert!((eq.pressure.value - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(eq.tails.is_exponential());
    if let TailDecay::Exponential { rate } = eq.tails.decay {
        assert!((rate - std::f64::consts::LN_2).abs() < 1e-6);
    }
    // Lebesgue: masses 2^-n, mean return time 2.
    for (n, w) in eq.state.weights.weights.iter().enumerate().take(20) {
        let exact = 0.5f64.powi(n as i32 + 1);
        assert!((w - exact).abs() < 1e-12 * exact);
    }
    assert!((eq.lambda.value - 2.0).abs() < 1e-12);
}

#[test]
fn pressure_curve_reports_gaps_for_failing_members() {
    let grid = [-0.2, 0.0, 0.2];
    let curve = pressure_curve(
        |t| if t > 0.1 { Err(thermo_core::Error::Refused("skip".into())) } else { Ok(constant_induced(t - 1.0)) },
        &grid,
        &CurveOptions::default(),
    );
    assert_eq!(curve.rows.len(), 2);
    assert_eq!(curve.gaps.len(), 1);
    for r in &curve.rows {
        assert!((r.pressure - (std::f64::consts::LN_2 + r.t - 1.0)).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constant_potential_pressure_is_log2_plus_c(c in -2.0f64..2.0) {
        let eq = solve_equilibrium(&constant_induced(c), &EquilibriumOptions::default()).unwrap();
        prop_assert!((eq.pressure.value - (std::f64::consts::LN_2 + c)).abs() < 1e-10);
        prop_assert_eq!(eq.status, Projectability::Projected);
    }

    #[test]
    fn gibbs_state_is_a_probability(b in -0.69f64..-0.05, k in 2usize..8) {
        let ind = StepFamily::hk(b, k).unwrap().induced(HK_HORIZON).unwrap();
        let eq = solve_equilibrium(&ind, &EquilibriumOptions::default()).unwrap();
        prop_assert!(eq.state.weights.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((eq.state.total_mass() - 1.0).abs() < 1e-9);
        // Pressure is at least the Birkhoff average at the fixed point 1, which is b.
        prop_assert!(eq.pressure.value >= b - 1e-12);
    }

    #[test]
    fn pressure_is_monotone_in_b(b in -1.5f64..-0.35, db in 0.01f64..0.3) {
        let opts = EquilibriumOptions::default();
        let p = |b: f64| solve_equilibrium(&StepFamily::hk(b, 2).unwrap().induced(HK_HORIZON).unwrap(), &opts).unwrap().pressure.value;
        prop_assert!(p(b + db) >= p(b) - 1e-12);
    }

    #[test]
    fn cylinder_masses_are_additive(b in -0.6f64..-0.1, i in 0usize..6, j in 0usize..6) {
        let ind = StepFamily::hk(b, 2).unwrap().induced(HK_HORIZON).unwrap();
        let eq = solve_equilibrium(&ind, &EquilibriumOptions::default()).unwrap();
        let psi = ind.shifted(eq.pressure.value);
        let parent = eq.state.cylinder_mass(&psi, &[i]);
        let child = eq.state.cylinder_mass(&psi, &[i, j]);
        // Product structure of a Bernoulli state.
        prop_assert!((child - parent * eq.state.cylinder_mass(&psi, &[j])).abs() <= 1e-12 * parent);
    }
}
