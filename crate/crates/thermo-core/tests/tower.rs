use thermo_core::hofbauer::TowerGraph;
use thermo_core::interval_map::PiecewiseMonotoneMap;

fn tent() -> PiecewiseMonotoneMap {
    PiecewiseMonotoneMap::piecewise_linear(&[0.0, 0.5, 1.0], &[1.7, -1.7], Some(0.0)).unwrap()
}

/// Distinct closed hulls `f^m(C_m)` for `m <= n`, plus the base interval.
fn image_oracle(map: &PiecewiseMonotoneMap, n: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for m in 1..=n {
        map.for_each_cylinder(m, &[], |c| {
            let (a, b) = c.image;
            if !out.iter().any(|&(u, v)| (u - a).abs() <= 1e-11 && (v - b).abs() <= 1e-11) {
                out.push((a, b));
            }
        })
        .unwrap();
    }
    out
}

#[test]
fn tent_domain_count_matches_image_oracle() {
    let f = tent();
    for n in 1..=8 {
        let t = TowerGraph::build(&f, n, usize::MAX).unwrap();
        assert_eq!(t.domains.len(), image_oracle(&f, n).len(), "horizon {n}");
    }
}

#[test]
fn truncation_matches_oracle_levels() {
    let f = tent();
    let t = TowerGraph::build(&f, 8, usize::MAX).unwrap();
    for r in 0..=8 {
        let tr = t.truncate(r);
        assert_eq!(tr.domains.len(), image_oracle(&f, r).len(), "R = {r}");
    }
    assert_eq!(t.truncate(0).domains.len(), 1);
    assert_eq!(t.truncate(t.max_level()).domains.len(), t.domains.len());
}

#[test]
fn path_counts_equal_lap_numbers() {
    let f = tent();
    let t = TowerGraph::build(&f, 10, usize::MAX).unwrap();
    let logs = t.log_path_counts(&[], &[], 10);
    let laps = f.lap_numbers(10).unwrap();
    for (n, (l, &c)) in logs.iter().zip(&laps).enumerate() {
        assert!((l.exp() - c as f64).abs() < 1e-6, "n = {}", n + 1);
    }
}

#[test]
fn paths_follow_cylinder_words() {
    let f = tent();
    let t = TowerGraph::build(&f, 6, usize::MAX).unwrap();
    f.for_each_cylinder(5, &[], |c| {
        let path = t.path_for_cylinder(c.word).unwrap();
        assert_eq!(path.len(), 6);
        for (k, w) in path.windows(2).enumerate() {
            assert!(t.arrows.iter().any(|a| a.from == w[0] && a.to == w[1] && a.branch == c.word[k]));
        }
        let last = &t.domains[path[5]];
        assert!((last.lo() - c.image.0).abs() < 1e-10 && (last.hi() - c.image.1).abs() < 1e-10);
    })
    .unwrap();
}

#[test]
fn arrows_commute_with_projection() {
    let f = tent();
    let t = TowerGraph::build(&f, 8, usize::MAX).unwrap();
    for a in &t.arrows {
        let (lo, hi) = a.transition;
        for s in 1..10 {
            let x = lo + (hi - lo) * s as f64 / 10.0;
            assert!(t.domains[a.from].contains(x));
            let y = f.branches()[a.branch as usize].eval(x);
            assert!(t.domains[a.to].contains(y), "arrow {a:?} at {x}");
        }
    }
}

#[test]
fn levels_increase_by_at_most_one() {
    let t = TowerGraph::build(&tent(), 8, usize::MAX).unwrap();
    for a in &t.arrows {
        assert!(t.domains[a.to].level <= t.domains[a.from].level + 1);
    }
}

fn reachable(t: &TowerGraph, from: usize) -> Vec<bool> {
    let mut seen = vec![false; t.domains.len()];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for a in t.arrows.iter().filter(|a| a.from == v) {
            if !seen[a.to] {
                seen[a.to] = true;
                stack.push(a.to);
            }
        }
    }
    seen
}

#[test]
fn transitive_part_is_mutually_reachable() {
    let t = TowerGraph::build(&tent(), 10, usize::MAX).unwrap();
    let part = t.transitive_part().unwrap();
    assert!(part.domains.len() >= 2);
    for i in 0..part.domains.len() {
        let r = reachable(&part, i);
        assert!(r.iter().all(|&b| b), "domain {i} does not reach all members");
    }
    assert!(part.coverage.unwrap() > 0.5);
    // Maximality: no outside domain is mutually reachable with a member.
    let members: Vec<(f64, f64)> = part.domains.iter().map(|d| (d.lo(), d.hi())).collect();
    let anchor = t
        .domains
        .iter()
        .position(|d| (d.lo(), d.hi()) == members[0])
        .unwrap();
    let from_anchor = reachable(&t, anchor);
    for d in &t.domains {
        if members.contains(&(d.lo(), d.hi())) {
            continue;
        }
        assert!(!(from_anchor[d.id] && reachable(&t, d.id)[anchor]));
    }
}

#[test]
fn disconnected_graph_reports_missing_component() {
    let f = tent();
    let t = TowerGraph::build(&f, 1, usize::MAX).unwrap();
    let mut g = t.clone();
    g.arrows.retain(|a| a.from != a.to);
    assert!(g.transitive_part().is_err());
}

#[test]
fn three_branch_map_avoiding_one_loop() {
    let f = PiecewiseMonotoneMap::full_linear(3).unwrap();
    let t = TowerGraph::build(&f, 3, 3).unwrap();
    assert_eq!(t.domains.len(), 1);
    let r = t.path_growth_rate(&[], &[1], 15).unwrap();
    assert!((r.value - 2f64.ln()).abs() < 1e-12);
}
