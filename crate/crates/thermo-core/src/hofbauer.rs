//! Canonical Markov extension (Hofbauer tower) as a leveled multigraph of domains.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::interval_map::{IntervalValue, PiecewiseMonotoneMap};
use crate::numeric::{self, PressureEstimate};

/// A tower domain `D = f^n(C_n)`, stored as its closed hull.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerDomain {
    pub id: usize,
    pub lo: IntervalValue,
    pub hi: IntervalValue,
    pub level: usize,
    /// One cylinder word whose image is this domain.
    pub word: Vec<u8>,
}

impl TowerDomain {
    pub fn lo(&self) -> f64 {
        self.lo.to_f64()
    }

    pub fn hi(&self) -> f64 {
        self.hi.to_f64()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }
}

/// Arrow `from -> to` generated by one branch acting on `transition ⊂ from`.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrow {
    pub from: usize,
    pub to: usize,
    pub branch: u8,
    pub transition: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct TowerGraph {
    pub domains: Vec<TowerDomain>,
    pub arrows: Vec<Arrow>,
    /// Length of the longest word used during construction.
    pub horizon: usize,
    pub level_cap: usize,
    /// Identifications made within tolerance rather than exactly.
    pub warnings: Vec<String>,
    /// Union length of member intervals, filled in by `transitive_part`.
    pub coverage: Option<f64>,
}

impl TowerGraph {
    /// Builds domains reachable by words of length at most `horizon` whose level is at most `level_cap`.
    pub fn build(map: &PiecewiseMonotoneMap, horizon: usize, level_cap: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("tower horizon must be at least 1".into()));
        }
        let tol = map.tolerance();
        let ident_tol = 10.0 * tol;
        let exact = map.is_dyadic_exact();
        let (zero, one) = if exact {
            (
                IntervalValue::Dyadic(crate::interval_map::Dyadic::integer(0)),
                IntervalValue::Dyadic(crate::interval_map::Dyadic::integer(1)),
            )
        } else {
            (IntervalValue::Float(0.0), IntervalValue::Float(1.0))
        };
        let mut g = TowerGraph {
            domains: vec![TowerDomain { id: 0, lo: zero, hi: one, level: 0, word: Vec::new() }],
            arrows: Vec::new(),
            horizon,
            level_cap,
            warnings: Vec::new(),
            coverage: None,
        };
        let mut queue = VecDeque::from([0usize]);
        while let Some(d) = queue.pop_front() {
            let level = g.domains[d].level;
            if level >= horizon {
                continue;
            }
            for (bi, b) in map.branches().iter().enumerate() {
                let (blo, bhi) = b.domain_values();
                let jlo = g.domains[d].lo.max(blo);
                let jhi = g.domains[d].hi.min(bhi);
                let width = jhi.to_f64() - jlo.to_f64();
                let nonempty = match (jlo, jhi) {
                    (IntervalValue::Dyadic(a), IntervalValue::Dyadic(c)) => a < c,
                    _ => width > tol,
                };
                if !nonempty {
                    continue;
                }
                let (u, v) = (b.apply_value(jlo), b.apply_value(jhi));
                let (lo, hi) = if b.increasing { (u, v) } else { (v, u) };
                let found = g.domains.iter().position(|e| {
                    lo.same(&e.lo, ident_tol) && hi.same(&e.hi, ident_tol)
                });
                let target = match found {
                    Some(t) => {
                        let e = &g.domains[t];
                        if !(lo.same(&e.lo, 0.0) && hi.same(&e.hi, 0.0)) {
                            g.warnings.push(format!(
                                "identified [{}, {}] with domain {t} within tolerance",
                                lo.to_f64(),
                                hi.to_f64()
                            ));
                        }
                        t
                    }
                    None => {
                        if level + 1 > level_cap {
                            continue;
                        }
                        let mut word = g.domains[d].word.clone();
                        word.push(bi as u8);
                        let id = g.domains.len();
                        g.domains.push(TowerDomain { id, lo, hi, level: level + 1, word });
                        queue.push_back(id);
                        id
                    }
                };
                g.arrows.push(Arrow { from: d, to: target, branch: bi as u8, transition: (jlo.to_f64(), jhi.to_f64()) });
            }
        }
        Ok(g)
    }

    pub fn max_level(&self) -> usize {
        self.domains.iter().map(|d| d.level).max().unwrap_or(0)
    }

    /// Subgraph on domains of level at most `r`, with ids renumbered.
    pub fn truncate(&self, r: usize) -> TowerGraph {
        self.restrict(|d| d.level <= r)
    }

    fn restrict<F: Fn(&TowerDomain) -> bool>(&self, keep: F) -> TowerGraph {
        let mut map = vec![usize::MAX; self.domains.len()];
        let mut domains = Vec::new();
        for d in &self.domains {
            if keep(d) {
                map[d.id] = domains.len();
                domains.push(TowerDomain { id: domains.len(), ..d.clone() });
            }
        }
        let arrows = self
            .arrows
            .iter()
            .filter(|a| map[a.from] != usize::MAX && map[a.to] != usize::MAX)
            .map(|a| Arrow { from: map[a.from], to: map[a.to], ..a.clone() })
            .collect();
        TowerGraph {
            domains,
            arrows,
            horizon: self.horizon,
            level_cap: self.level_cap,
            warnings: self.warnings.clone(),
            coverage: None,
        }
    }

    /// Outgoing arrow indices per domain.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.domains.len()];
        for (i, a) in self.arrows.iter().enumerate() {
            out[a.from].push(i);
        }
        out
    }

    /// Strongly connected components, each sorted by id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let succ: Vec<Vec<usize>> = self.adjacency().iter().map(|v| v.iter().map(|&i| self.arrows[i].to).collect()).collect();
        strongly_connected(&succ)
    }

    /// Largest strongly connected component carrying at least one arrow.
    pub fn transitive_part(&self) -> Result<TowerGraph> {
        let comps = self.components();
        let nontrivial = |c: &Vec<usize>| {
            c.len() > 1 || self.arrows.iter().any(|a| a.from == c[0] && a.to == c[0])
        };
        let best = comps
            .into_iter()
            .filter(nontrivial)
            .max_by_key(|c| c.len())
            .ok_or_else(|| Error::Graph("no strongly connected component at this horizon".into()))?;
        let mut member = vec![false; self.domains.len()];
        for &i in &best {
            member[i] = true;
        }
        let mut sub = self.restrict(|d| member[d.id]);
        sub.coverage = Some(union_length(&sub.domains));
        Ok(sub)
    }

    /// The path of domains followed by a cylinder word from the base.
    pub fn path_for_cylinder(&self, word: &[u8]) -> Result<Vec<usize>> {
        let adj = self.adjacency();
        let mut path = vec![0usize];
        let mut cur = 0usize;
        for (k, &w) in word.iter().enumerate() {
            let next = adj[cur]
                .iter()
                .map(|&i| &self.arrows[i])
                .find(|a| a.branch == w)
                .ok_or_else(|| Error::Graph(format!("word {word:?} is not realizable at position {k}")))?;
            cur = next.to;
            path.push(cur);
        }
        Ok(path)
    }

    /// `log` of the number of `n`-paths from the base for `n = 1..=n_max`, skipping
    /// listed domains (after time 0) and arrows.
    pub fn log_path_counts(&self, avoid_domains: &[usize], avoid_arrows: &[usize], n_max: usize) -> Vec<f64> {
        let mut blocked_d = vec![false; self.domains.len()];
        for &d in avoid_domains {
            if d < blocked_d.len() {
                blocked_d[d] = true;
            }
        }
        let mut blocked_a = vec![false; self.arrows.len()];
        for &a in avoid_arrows {
            if a < blocked_a.len() {
                blocked_a[a] = true;
            }
        }
        let mut v = vec![0.0; self.domains.len()];
        v[0] = 1.0;
        let mut log_scale = 0.0;
        let mut out = Vec::with_capacity(n_max);
        for _ in 0..n_max {
            let mut next = vec![0.0; self.domains.len()];
            for (i, a) in self.arrows.iter().enumerate() {
                if !blocked_a[i] && !blocked_d[a.to] {
                    next[a.to] += v[a.from];
                }
            }
            let total: f64 = next.iter().sum();
            if total == 0.0 {
                out.push(f64::NEG_INFINITY);
                v = next;
                continue;
            }
            let m = next.iter().cloned().fold(0.0, f64::max);
            log_scale += fmath::ln(m);
            for x in &mut next {
                *x /= m;
            }
            out.push(log_scale + fmath::ln(next.iter().sum::<f64>()));
            v = next;
        }
        out
    }

    /// Growth rate of `n`-paths avoiding the given sets; `-inf` when none survive.
    pub fn path_growth_rate(&self, avoid_domains: &[usize], avoid_arrows: &[usize], n_max: usize) -> Result<PressureEstimate> {
        if n_max < 2 {
            return Err(Error::InvalidParameter("n_max must be at least 2".into()));
        }
        let logs = self.log_path_counts(avoid_domains, avoid_arrows, n_max);
        let ns: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
        let diagnostics: Vec<f64> = logs.iter().zip(&ns).map(|(l, n)| l / n).collect();
        let window = numeric::final_third(n_max);
        if logs[window.clone()].iter().all(|l| !l.is_finite()) {
            return Ok(PressureEstimate::new(
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                (window.start + 1, n_max),
                diagnostics,
            ));
        }
        let value = numeric::window_rate(&ns, &logs).map(|f| f.slope).unwrap_or(diagnostics[n_max - 1]);
        let tail = &diagnostics[window.clone()];
        let lower = tail.iter().cloned().fold(f64::INFINITY, f64::min).min(value);
        let upper = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(value);
        Ok(PressureEstimate::new(value, lower, upper, (window.start + 1, n_max), diagnostics))
    }
}

fn union_length(domains: &[TowerDomain]) -> f64 {
    let mut spans: Vec<(f64, f64)> = domains.iter().map(|d| (d.lo(), d.hi())).collect();
    spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in spans {
        cur = match cur {
            Some((c, d)) if a <= d => Some((c, d.max(b))),
            Some((c, d)) => {
                total += d - c;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((c, d)) = cur {
        total += d - c;
    }
    total
}

/// Tarjan's algorithm, iterative. Components come out sorted internally.
pub fn strongly_connected(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("stack holds the component");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}
