use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use thermo_core::hofbauer::TowerGraph;
use thermo_core::interval_map::PiecewiseMonotoneMap;
use thermo_core::potential::Potential;
use thermo_core::rome::*;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Random graph whose exterior (vertices `>= rome_size`) only has forward edges.
fn graph_with_rome() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, i64, i64)>)> {
    (2usize..=8).prop_flat_map(|n| {
        (1usize..=n).prop_flat_map(move |r| {
            let edge = (0..n, 0..n, 1i64..9, 1i64..5);
            (Just(n), Just(r), proptest::collection::vec(edge, 1..24))
        })
    })
}

fn build(n: usize, r: usize, raw: &[(usize, usize, i64, i64)]) -> WeightedDigraph<BigRational> {
    let edges = raw
        .iter()
        .filter(|(i, j, _, _)| *i < r || *j < r || i < j)
        .map(|&(i, j, a, b)| (i, j, q(a, b)));
    WeightedDigraph::from_edges(n, edges).unwrap()
}

/// Cycle in the complement of `rome`, by brute force over simple paths.
fn brute_force_has_cycle(g: &WeightedDigraph<f64>, rome: &[usize]) -> bool {
    let n = g.vertex_count();
    let outside: Vec<bool> = (0..n).map(|v| !rome.contains(&v)).collect();
    fn dfs(g: &WeightedDigraph<f64>, outside: &[bool], start: usize, cur: usize, seen: &mut Vec<bool>) -> bool {
        for (j, _) in g.successors(cur) {
            if !outside[*j] {
                continue;
            }
            if *j == start {
                return true;
            }
            if !seen[*j] {
                seen[*j] = true;
                if dfs(g, outside, start, *j, seen) {
                    return true;
                }
                seen[*j] = false;
            }
        }
        false
    }
    (0..n).filter(|&v| outside[v]).any(|v| {
        let mut seen = vec![false; n];
        seen[v] = true;
        dfs(g, &outside, v, v, &mut seen)
    })
}

/// Faddeev-LeVerrier characteristic polynomial coefficients of `m`, highest degree first.
fn char_poly(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut coeffs = vec![1.0];
    let mut mk = vec![vec![0.0; n]; n];
    let mut c = 1.0;
    for k in 1..=n {
        for (i, row) in mk.iter_mut().enumerate() {
            row[i] += c;
        }
        mk = mat_mul(m, &mk);
        let tr: f64 = (0..n).map(|i| mk[i][i]).sum();
        c = -tr / k as f64;
        coeffs.push(c);
    }
    coeffs
}

fn largest_real_root(coeffs: &[f64], hi: f64) -> f64 {
    let p = |x: f64| coeffs.iter().fold(0.0, |acc, c| acc * x + c);
    let steps = 200_000;
    let mut prev = hi;
    for s in 1..=steps {
        let x = hi * (1.0 - s as f64 / steps as f64);
        if p(x).signum() != p(prev).signum() {
            let (mut a, mut b) = (x, prev);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if p(mid).signum() == p(a).signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return 0.5 * (a + b);
        }
        prev = x;
    }
    0.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn rome_identity_is_exact((n, r, raw) in graph_with_rome(), xs in proptest::collection::vec((-9i64..10, 1i64..7), 3..6)) {
        let g = build(n, r, &raw);
        let rome: Vec<usize> = (0..r).collect();
        prop_assert!(verify_rome(&g, &rome));
        let xs: Vec<BigRational> = xs.into_iter().map(|(a, b)| q(a, b)).collect();
        let rep = characteristic_identity_check(&g, &rome, &xs).unwrap();
        prop_assert!(rep.holds());
    }

    #[test]
    fn verify_rome_matches_brute_force(n in 2usize..7, raw in proptest::collection::vec((0usize..7, 0usize..7), 0..16), mask in 0u32..128) {
        let edges = raw.into_iter().filter(|(i, j)| *i < n && *j < n).map(|(i, j)| (i, j, 1.0));
        let g = WeightedDigraph::from_edges(n, edges).unwrap();
        let rome: Vec<usize> = (0..n).filter(|v| mask & (1 << v) != 0).collect();
        prop_assert_eq!(verify_rome(&g, &rome), !brute_force_has_cycle(&g, &rome));
    }

    #[test]
    fn split_preserves_radius_and_duplicates_eigenvector(
        n in 2usize..7,
        raw in proptest::collection::vec((0usize..7, 0usize..7, 0.1f64..3.0), 4..30),
        pick in 0usize..7,
    ) {
        let mut g = WeightedDigraph::<f64>::new(n);
        // A Hamiltonian cycle keeps the graph irreducible; self-loops come from the random part.
        for i in 0..n {
            g.add_edge(i, (i + 1) % n, 1.0).unwrap();
        }
        for (i, j, w) in raw {
            if i < n && j < n {
                g.add_edge(i, j, w).unwrap();
            }
        }
        let before = spectral_radius(&g).unwrap();
        let s = vertex_split(&g, pick % n).unwrap();
        let after = spectral_radius(&s.graph).unwrap();
        prop_assert!((before.rho - after.rho).abs() <= 1e-9 * before.rho.max(1.0));
        let predicted = split_eigenvector(&before.left_vector, &s);
        for (a, b) in predicted.iter().zip(&after.left_vector) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn radius_lies_between_diagonal_and_row_sum(n in 1usize..7, raw in proptest::collection::vec((0usize..7, 0usize..7, 0.01f64..5.0), 1..30)) {
        let edges: Vec<_> = raw.into_iter().filter(|(i, j, _)| *i < n && *j < n).collect();
        prop_assume!(!edges.is_empty());
        let g = WeightedDigraph::from_edges(n, edges).unwrap();
        let m = g.matrix();
        let rho = spectral_radius(&g).unwrap().rho;
        let diag = (0..n).map(|i| m[i][i]).fold(0.0, f64::max);
        prop_assert!(rho >= diag - 1e-9);
        prop_assert!(rho <= left_norm(&m) + 1e-9);
    }

    #[test]
    fn adding_an_edge_never_decreases_radius(
        n in 2usize..7,
        raw in proptest::collection::vec((0usize..7, 0usize..7, 0.1f64..3.0), 1..20),
        extra in (0usize..7, 0usize..7, 0.01f64..2.0),
    ) {
        let edges: Vec<_> = raw.into_iter().filter(|(i, j, _)| *i < n && *j < n).collect();
        let mut g = WeightedDigraph::from_edges(n, edges).unwrap();
        let before = spectral_radius(&g).unwrap().rho;
        g.add_edge(extra.0 % n, extra.1 % n, extra.2).unwrap();
        let after = spectral_radius(&g).unwrap().rho;
        prop_assert!(after >= before - 1e-9 * before.max(1.0));
    }
}

#[test]
fn full_rome_identity_is_trivial() {
    let g = WeightedDigraph::from_edges(3, [(0, 1, q(1, 2)), (1, 2, q(3, 1)), (2, 0, q(2, 3)), (2, 2, q(1, 1))]).unwrap();
    let rep = characteristic_identity_check(&g, &[0, 1, 2], &[q(1, 1), q(-2, 3), q(5, 1)]).unwrap();
    assert!(rep.holds());
    for s in &rep.samples {
        assert_eq!(s.lhs, s.rhs);
    }
}

#[test]
fn five_vertex_rational_identity_with_ten_samples() {
    let g = WeightedDigraph::from_edges(
        5,
        [
            (0, 1, q(1, 2)),
            (0, 3, q(2, 1)),
            (1, 2, q(3, 4)),
            (2, 0, q(5, 3)),
            (2, 4, q(1, 1)),
            (3, 4, q(7, 2)),
            (4, 0, q(1, 3)),
            (4, 4, q(2, 5)),
            (1, 1, q(1, 7)),
        ],
    )
    .unwrap();
    let rome = [0, 1, 4];
    assert!(verify_rome(&g, &rome));
    let xs: Vec<BigRational> = (1..=10).map(|k| q(k * k - 20, k + 2)).collect();
    let rep = characteristic_identity_check(&g, &rome, &xs).unwrap();
    assert!(rep.holds());
    assert!(rep.residuals().iter().all(|r| *r == q(0, 1)));
}

#[test]
fn zero_sample_is_reported_not_compared() {
    let g = WeightedDigraph::from_edges(2, [(0, 1, q(1, 1)), (1, 0, q(1, 1))]).unwrap();
    let rep = characteristic_identity_check(&g, &[0], &[q(0, 1), q(3, 1)]).unwrap();
    assert!(rep.samples[0].skipped);
    assert!(rep.holds());
    let a = rome_matrix(&g, &[0], DEFAULT_PATH_CAP).unwrap();
    assert_eq!(a.eval(&q(0, 1)), vec![vec![q(0, 1)]]);
}

#[test]
fn path_cap_is_enforced() {
    // Layers of two vertices fully connected forward: 2^layers simple paths.
    let layers = 12;
    let n = 2 + 2 * layers;
    let mut g = WeightedDigraph::<f64>::new(n);
    for v in [2, 3] {
        g.add_edge(0, v, 1.0).unwrap();
    }
    for l in 0..layers - 1 {
        for a in 0..2 {
            for b in 0..2 {
                g.add_edge(2 + 2 * l + a, 2 + 2 * (l + 1) + b, 1.0).unwrap();
            }
        }
    }
    for v in [n - 2, n - 1] {
        g.add_edge(v, 1, 1.0).unwrap();
    }
    g.add_edge(1, 0, 1.0).unwrap();
    let a = rome_matrix(&g, &[0, 1], DEFAULT_PATH_CAP).unwrap();
    assert_eq!(a.path_count, (1u128 << layers) + 1);
    assert_eq!(a.entries[0][1], vec![(layers + 1, (1u64 << layers) as f64)]);
    assert!(rome_matrix(&g, &[0, 1], 100).is_err());
}

#[test]
fn random_six_by_six_matches_characteristic_root() {
    let mut seed: u64 = 0x2545_f491_4f6c_dd1d;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..10 {
        let m: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| 0.05 + next()).collect()).collect();
        let rho = spectral_radius(&WeightedDigraph::from_matrix(&m).unwrap()).unwrap().rho;
        let oracle = largest_real_root(&char_poly(&m), left_norm(&m) + 1.0);
        assert!((rho - oracle).abs() <= 1e-9, "{rho} vs {oracle}");
    }
}

#[test]
fn split_of_all_ones_keeps_radius_two() {
    let g = WeightedDigraph::from_matrix(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let s = vertex_split(&g, 0).unwrap();
    assert_eq!(s.graph.vertex_count(), 3);
    let r = spectral_radius(&s.graph).unwrap();
    assert!((r.rho - 2.0).abs() < 1e-12);
    for (a, b) in r.left_vector.iter().zip([1.0 / 3.0; 3]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn perturbation_ratio_tends_to_one() {
    let u = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
    let fam: Vec<FamilyMember> = (2..=20)
        .map(|n| {
            let e = 2.0 * 0.5f64.powi(n as i32);
            (n, u.clone(), vec![vec![e, 0.0], vec![0.0, 0.0]])
        })
        .collect();
    let rep = perturbation_bound_check(&fam, 12).unwrap();
    assert_eq!(rep.norm_bound, 2.0);
    assert!(rep.monotone);
    assert!(rep.final_gap < 1e-6);
    assert!(rep.rows.iter().all(|r| r.bound_holds));
    for r in &rep.rows {
        // Closed form: largest root of x^2 - (2 + e) x + e.
        let e = 2.0 * 0.5f64.powi(r.n as i32);
        let exact = 0.5 * (2.0 + e + (4.0 + e * e).sqrt());
        assert!((r.rho_sum - exact).abs() < 1e-12);
    }
}

fn doubling_tower() -> (PiecewiseMonotoneMap, TowerGraph) {
    let f = PiecewiseMonotoneMap::doubling();
    let t = TowerGraph::build(&f, 7, usize::MAX).unwrap();
    (f, t)
}

#[test]
fn tail_gap_zero_potential_on_doubling() {
    let (f, t) = doubling_tower();
    let xhat = LiftedSet { domains: vec![0], prefix: vec![1, 1, 1] };
    let r = tail_gap(&f, &Potential::constant(0.0), &t, &xhat, 6, 3).unwrap();
    assert!((r.rho_0 - 2.0).abs() < 1e-6);
    assert!(r.rho_1 < 2.0);
    // Binary words avoiding 111 grow like the tribonacci constant.
    assert!((r.rho_1 - 1.839_286_755_214_161).abs() < 1e-9);
    assert!(r.gamma > 0.0 && r.separated);
}

#[test]
fn tail_gap_hk_on_doubling() {
    let (f, t) = doubling_tower();
    let phi = Potential::hk(-0.5, 2).unwrap();
    let xhat = LiftedSet { domains: vec![0], prefix: vec![1] };
    let r = tail_gap(&f, &phi, &t, &xhat, 6, 3).unwrap();
    assert!(r.rho_1 < r.rho_0);
    assert!(r.gamma > 0.0);
    // Only the fixed point 0 avoids [1/2, 1); its arrow weight is taken at x = 1/32.
    assert!((r.rho_1 - phi.eval(1.0 / 32.0).exp()).abs() < 1e-12);
}

#[test]
fn tail_gap_refuses_wide_range() {
    let (f, t) = doubling_tower();
    let phi = Potential::hk(-1.0, 2).unwrap();
    let xhat = LiftedSet { domains: vec![0], prefix: vec![1] };
    assert!(matches!(tail_gap(&f, &phi, &t, &xhat, 6, 3), Err(thermo_core::Error::Refused(_))));
}

#[test]
fn artificial_paths_enter_rome_matrix_with_bounded_weight() {
    let f = PiecewiseMonotoneMap::piecewise_linear(&[0.0, 0.5, 1.0], &[1.7, -1.7], Some(0.0)).unwrap();
    let r_level = 4;
    let t = TowerGraph::build(&f, r_level + 3, usize::MAX).unwrap();
    let phi = Potential::two_valued(-0.2);
    let xhat = LiftedSet { domains: vec![0], prefix: vec![0, 0] };
    let r = tail_gap(&f, &phi, &t, &xhat, r_level, 2).unwrap();
    assert!(r.artificial_paths > 0);
    assert!(r.rome_of_g1);
    let a = rome_matrix(&r.g1, &r.rome, DEFAULT_PATH_CAP).unwrap();
    let bound = (r_level as f64 * phi.sup()).exp();
    let mut long = 0;
    for row in &a.entries {
        for terms in row {
            for (len, w) in terms {
                if *len > 1 {
                    long += 1;
                    assert_eq!(*len, r_level);
                    assert!(*w <= bound * (1.0 + 1e-12));
                }
            }
        }
    }
    assert!(long > 0);
}
