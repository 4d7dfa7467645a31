//! First-return inducing schemes, induced potentials, summability of variations,
//! measure projection and the Young tower.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::hofbauer::TowerGraph;
use crate::interval_map::PiecewiseMonotoneMap;
use crate::numeric::{self, Enclosure};
use crate::potential::{Potential, Span};
use crate::pressure::{DivergencePolicy, SeriesVerdict};

/// Beyond this, `1/2 + 2^{-n}` is no longer distinct from `1/2` in double precision.
pub const DOUBLING_HORIZON_MAX: usize = 50;

/// Safety cap on pieces explored while searching for first returns.
const PIECE_CAP: usize = 2_000_000;
/// Letters pulled back when validating branch images.
const IMAGE_CHECK_BUDGET: usize = 400_000;
/// Blocks whose share of the mean return time is below this are bounded rather than integrated.
const NEGLIGIBLE_BLOCK_MASS: f64 = 1e-17;

/// One branch `F|_{X_i} = f^{tau_i}` of an inducing scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeBranch {
    pub span: Span,
    pub tau: usize,
    /// Itinerary of the block under `f`.
    pub word: Vec<u8>,
    /// Orientation of `F` on the branch.
    pub increasing: bool,
}

impl SchemeBranch {
    pub fn lo(&self) -> f64 {
        self.span.lo
    }

    pub fn hi(&self) -> f64 {
        self.span.hi
    }

    pub fn width(&self) -> f64 {
        self.span.hi - self.span.lo
    }
}

/// What lies beyond the truncation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailShape {
    /// No branches beyond the horizon.
    Finite,
    /// Exactly one branch for every inducing time above the horizon.
    OnePerTime,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct InducingScheme {
    map: PiecewiseMonotoneMap,
    base: Span,
    branches: Vec<SchemeBranch>,
    /// Branch indices sorted by position.
    by_position: Vec<usize>,
    horizon: usize,
    tail: TailShape,
    /// Non-full first-return pieces `(lo, hi, tau)` that were left out.
    rejected: Vec<(f64, f64, usize)>,
    diagnostics: Vec<String>,
}

/// Domain bookkeeping for the first-return search.
enum Target<'a> {
    Interval,
    Tower { tower: &'a TowerGraph, domain: usize },
}

struct SearchPiece {
    lo: f64,
    hi: f64,
    increasing: bool,
    word: Vec<u8>,
    domain: usize,
}

impl InducingScheme {
    /// Validates an explicit branch table: disjoint branches inside `base`, each mapped onto `base`.
    pub fn new(
        map: &PiecewiseMonotoneMap,
        base: Span,
        branches: Vec<SchemeBranch>,
        horizon: usize,
        tail: TailShape,
    ) -> Result<Self> {
        if !(base.hi > base.lo) {
            return Err(Error::InvalidParameter(format!("base [{}, {}] has empty interior", base.lo, base.hi)));
        }
        if branches.is_empty() {
            return Err(Error::InvalidParameter("scheme has no branches".into()));
        }
        let tol = 1e-9;
        // Pullbacks cost one inverse per letter; past the budget only short words and a strided sample are checked.
        let letters: usize = branches.iter().map(|b| b.tau).sum();
        let stride = letters.div_ceil(IMAGE_CHECK_BUDGET).max(1);
        let mut checked = 0;
        for (i, b) in branches.iter().enumerate() {
            if b.tau == 0 || b.word.len() != b.tau {
                return Err(Error::InvalidParameter(format!("branch {i}: tau {} and word length {} disagree", b.tau, b.word.len())));
            }
            if b.lo() < base.lo - tol || b.hi() > base.hi + tol || !(b.hi() > b.lo()) {
                return Err(Error::InvalidParameter(format!("branch {i} = [{}, {}] is not inside the base", b.lo(), b.hi())));
            }
            if b.tau > 64 && i % stride != 0 && i + 1 != branches.len() {
                continue;
            }
            checked += 1;
            // Pull the base back: the inverses contract, so this stays accurate for long words.
            let (p0, p1) = (pull_back(map, &b.word, base.lo), pull_back(map, &b.word, base.hi));
            let (plo, phi) = if b.increasing { (p0, p1) } else { (p1, p0) };
            let slack = 1e-6 * b.width() + 1e-13;
            if fmath::abs(plo - b.lo()) > slack || fmath::abs(phi - b.hi()) > slack {
                return Err(Error::InvalidParameter(format!(
                    "branch {i} = [{}, {}] does not map onto the base [{}, {}] (pullback [{plo}, {phi}])",
                    b.lo(),
                    b.hi(),
                    base.lo,
                    base.hi
                )));
            }
        }
        let branches_len = branches.len();
        let mut by_position: Vec<usize> = (0..branches.len()).collect();
        by_position.sort_by(|&a, &b| branches[a].lo().partial_cmp(&branches[b].lo()).unwrap_or(core::cmp::Ordering::Equal));
        for w in by_position.windows(2) {
            if branches[w[0]].hi() > branches[w[1]].lo() + tol {
                return Err(Error::InvalidParameter(format!("branches {} and {} overlap", w[0], w[1])));
            }
        }
        Ok(InducingScheme {
            map: map.clone(),
            base,
            branches,
            by_position,
            horizon,
            tail,
            rejected: Vec::new(),
            diagnostics: if checked < branches_len {
                vec![format!("image check sampled on {checked} of {branches_len} branches")]
            } else {
                Vec::new()
            },
        })
    }

    /// First-return branches of `f` to `base` with inducing time at most `n_max`.
    pub fn first_return(map: &PiecewiseMonotoneMap, base: Span, n_max: usize) -> Result<Self> {
        search(map, base, n_max, Target::Interval)
    }

    /// First returns of the lifted map to `domain ∩ cylinder(word)` in the tower, projected.
    pub fn tower_first_return(
        map: &PiecewiseMonotoneMap,
        tower: &TowerGraph,
        domain: usize,
        word: &[u8],
        n_max: usize,
    ) -> Result<Self> {
        let d = tower
            .domains
            .get(domain)
            .ok_or_else(|| Error::Graph(format!("domain {domain} not in tower")))?;
        let cyl = map.cylinder_for_word(word)?;
        let lo = cyl.0.max(d.lo());
        let hi = cyl.1.min(d.hi());
        if !(hi - lo > map.tolerance()) {
            return Err(Error::InvalidParameter("cylinder does not meet the domain".into()));
        }
        // The ends of [0, 1] are not boundaries of the tower, so only interior domain ends count.
        let tol = map.tolerance();
        let touches = |x: f64, end: f64| fmath::abs(x - end) <= tol && end > tol && end < 1.0 - tol;
        if touches(lo, d.lo()) || touches(hi, d.hi()) {
            return Err(Error::InvalidParameter(format!(
                "cylinder [{lo}, {hi}] is not compactly contained in domain [{}, {}]",
                d.lo(),
                d.hi()
            )));
        }
        search(map, Span { lo, hi, lo_closed: true, hi_closed: cyl.2 }, n_max, Target::Tower { tower, domain })
    }

    /// The doubling scheme on `(1/2, 1]` with `X_n = (1/2 + 2^{-n-1}, 1/2 + 2^{-n}]` and `tau_n = n`.
    pub fn doubling_half(n_max: usize) -> Result<Self> {
        if n_max > DOUBLING_HORIZON_MAX {
            return Err(Error::ResolutionLimit { depth: n_max, width: fmath::powi(2.0, -(n_max as i32) - 1) });
        }
        let map = PiecewiseMonotoneMap::doubling();
        let base = Span { lo: 0.5, hi: 1.0, lo_closed: false, hi_closed: true };
        let branches = (1..=n_max)
            .map(|n| {
                let mut word = vec![0u8; n];
                word[0] = 1;
                SchemeBranch {
                    span: Span {
                        lo: 0.5 + fmath::powi(2.0, -(n as i32) - 1),
                        hi: 0.5 + fmath::powi(2.0, -(n as i32)),
                        lo_closed: false,
                        hi_closed: true,
                    },
                    tau: n,
                    word,
                    increasing: true,
                }
            })
            .collect();
        Self::new(&map, base, branches, n_max, TailShape::OnePerTime)
    }

    pub fn map(&self) -> &PiecewiseMonotoneMap {
        &self.map
    }

    pub fn base(&self) -> Span {
        self.base
    }

    pub fn branches(&self) -> &[SchemeBranch] {
        &self.branches
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn tail_shape(&self) -> TailShape {
        self.tail
    }

    pub fn rejected(&self) -> &[(f64, f64, usize)] {
        &self.rejected
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn max_tau(&self) -> usize {
        self.branches.iter().map(|b| b.tau).max().unwrap_or(0)
    }

    /// Length of the base not covered by the stored branches.
    pub fn uncovered(&self) -> f64 {
        (self.base.hi - self.base.lo) - self.branches.iter().map(SchemeBranch::width).sum::<f64>()
    }

    pub fn branch_at(&self, x: f64) -> Option<usize> {
        let k = self.by_position.partition_point(|&i| self.branches[i].lo() < x);
        [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|p| self.by_position.get(p).copied())
            .find(|&i| self.branches[i].span.contains(x))
    }

    /// `F(x)` with the branch index.
    pub fn apply(&self, x: f64) -> Option<(f64, usize)> {
        let i = self.branch_at(x)?;
        Some((apply_word(&self.map, &self.branches[i].word, x), i))
    }

    pub fn branch_apply(&self, i: usize, x: f64) -> f64 {
        apply_word(&self.map, &self.branches[i].word, x)
    }

    /// `(F|_{X_i})^{-1}(y)`.
    pub fn branch_inverse(&self, i: usize, y: f64) -> f64 {
        pull_back(&self.map, &self.branches[i].word, y)
    }

    /// Closed hull of `f^k(X_i)`.
    pub fn block_image(&self, i: usize, k: usize) -> (f64, f64) {
        let b = &self.branches[i];
        let w = &b.word[..k.min(b.tau)];
        let (a, c) = (apply_word(&self.map, w, b.lo()), apply_word(&self.map, w, b.hi()));
        (a.min(c), a.max(c))
    }
}

fn apply_word(map: &PiecewiseMonotoneMap, word: &[u8], x: f64) -> f64 {
    let br = map.branches();
    word.iter().fold(x, |y, &b| br[b as usize].eval(y))
}

fn pull_back(map: &PiecewiseMonotoneMap, word: &[u8], y: f64) -> f64 {
    let br = map.branches();
    word.iter().rev().fold(y, |x, &b| br[b as usize].inverse(x))
}

fn search(map: &PiecewiseMonotoneMap, base: Span, n_max: usize, target: Target<'_>) -> Result<InducingScheme> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("inducing horizon must be at least 1".into()));
    }
    if !(base.hi > base.lo) {
        return Err(Error::InvalidParameter(format!("base [{}, {}] has empty interior", base.lo, base.hi)));
    }
    let tol = map.tolerance();
    let match_tol = 1e-9 * (base.hi - base.lo).max(1e-3);
    let br = map.branches();
    let (home, arrows) = match &target {
        Target::Interval => (0, None),
        Target::Tower { tower, domain } => {
            let mut by_branch = vec![Vec::new(); tower.domains.len()];
            for a in &tower.arrows {
                by_branch[a.from].push(a.clone());
            }
            (*domain, Some(by_branch))
        }
    };
    let mut queue = VecDeque::new();
    queue.push_back(SearchPiece { lo: base.lo, hi: base.hi, increasing: true, word: Vec::new(), domain: home });
    let mut branches = Vec::new();
    let mut rejected = Vec::new();
    let mut explored = 0usize;
    while let Some(p) = queue.pop_front() {
        explored += 1;
        if explored > PIECE_CAP {
            return Err(Error::Refused(format!("first-return search exceeded {PIECE_CAP} pieces")));
        }
        let steps: Vec<(u8, f64, f64, usize)> = match &arrows {
            None => br.iter().enumerate().map(|(b, x)| (b as u8, x.lo, x.hi, 0)).collect(),
            Some(by) => by[p.domain].iter().map(|a| (a.branch, a.transition.0, a.transition.1, a.to)).collect(),
        };
        for (b, dlo, dhi, to) in steps {
            let a = p.lo.max(dlo);
            let c = p.hi.min(dhi);
            if c - a <= tol {
                continue;
            }
            let branch = &br[b as usize];
            let (y0, y1) = (branch.eval(a), branch.eval(c));
            let (ylo, yhi) = (y0.min(y1), y0.max(y1));
            let increasing = p.increasing == branch.increasing;
            let mut word = p.word.clone();
            word.push(b);
            let tau = word.len();
            let at_home = to == home;
            if at_home {
                let ilo = ylo.max(base.lo);
                let ihi = yhi.min(base.hi);
                if ihi - ilo > tol {
                    let x0 = pull_back(map, &word, ilo);
                    let x1 = pull_back(map, &word, ihi);
                    if fmath::abs(ilo - base.lo) <= match_tol && fmath::abs(ihi - base.hi) <= match_tol {
                        let (lo_closed, hi_closed) =
                            if increasing { (base.lo_closed, base.hi_closed) } else { (base.hi_closed, base.lo_closed) };
                        branches.push(SchemeBranch {
                            span: Span { lo: x0.min(x1), hi: x0.max(x1), lo_closed, hi_closed },
                            tau,
                            word: word.clone(),
                            increasing,
                        });
                    } else {
                        rejected.push((x0.min(x1), x0.max(x1), tau));
                    }
                }
            }
            if tau >= n_max {
                continue;
            }
            let outside: Vec<(f64, f64)> = if at_home {
                [(ylo, ylo.max(base.lo).min(yhi)), (yhi.min(base.hi).max(ylo), yhi)]
                    .into_iter()
                    .filter(|(l, h)| h - l > tol)
                    .collect()
            } else {
                vec![(ylo, yhi)]
            };
            for (l, h) in outside {
                queue.push_back(SearchPiece { lo: l, hi: h, increasing, word: word.clone(), domain: to });
            }
        }
    }
    if branches.is_empty() {
        return Err(Error::Refused(format!(
            "no full first-return branch with inducing time <= {n_max} ({} partial pieces rejected)",
            rejected.len()
        )));
    }
    let mut diagnostics = Vec::new();
    if !rejected.is_empty() {
        diagnostics.push(format!("{} non-full first-return pieces rejected", rejected.len()));
    }
    let mut scheme = InducingScheme::new(map, base, branches, n_max, TailShape::Unknown)?;
    scheme.rejected = rejected;
    scheme.diagnostics = diagnostics;
    Ok(scheme)
}

/// Enclosure and point estimate of a tail series, with a divergence flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSum {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub divergent: bool,
}

impl TailSum {
    pub const ZERO: TailSum = TailSum { lower: 0.0, value: 0.0, upper: 0.0, divergent: false };

    pub fn exact(v: f64) -> Self {
        TailSum { lower: v, value: v, upper: v, divergent: false }
    }

    pub fn divergent() -> Self {
        TailSum { lower: f64::INFINITY, value: f64::INFINITY, upper: f64::INFINITY, divergent: true }
    }

    fn unknown() -> Self {
        TailSum { lower: 0.0, value: 0.0, upper: f64::INFINITY, divergent: false }
    }

    pub fn is_bounded(&self) -> bool {
        !self.divergent && self.upper.is_finite()
    }

    pub fn scale(&self, c: f64) -> Self {
        TailSum { lower: self.lower * c, value: self.value * c, upper: self.upper * c, divergent: self.divergent }
    }
}

/// Tail terms summed one by one before the closed-form remainder takes over.
const EXPLICIT_TAIL_TERMS: usize = 4096;

/// Branch contributions above the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailModel {
    Finite,
    /// One branch per `n > start`, with `tau = n` and
    /// `e^{Phi_n} ∈ [coeff_lo, coeff_hi] · e^{rate n} (n + offset)^{-exponent}`, `exponent >= 0`.
    Closed { start: usize, coeff_lo: f64, coeff_hi: f64, rate: f64, exponent: f64, offset: f64 },
    /// Only lower bounds are available.
    Unknown,
}

impl TailModel {
    pub fn shifted(&self, s: f64) -> TailModel {
        match *self {
            TailModel::Closed { start, coeff_lo, coeff_hi, rate, exponent, offset } => {
                TailModel::Closed { start, coeff_lo, coeff_hi, rate: rate - s, exponent, offset }
            }
            other => other,
        }
    }

    /// Geometric rate of the tail terms, if known.
    pub fn rate(&self) -> Option<f64> {
        match self {
            TailModel::Closed { rate, .. } => Some(*rate),
            _ => None,
        }
    }

    /// Enclosure of `sum_{n > start} n^w e^{Phi_n}` for `w ∈ {0, 1}`.
    pub fn sum(&self, weighted: bool) -> TailSum {
        self.sum_above(0, weighted)
    }

    /// As [`TailModel::sum`] but over `n > max(start, from)`.
    pub fn sum_above(&self, from: usize, weighted: bool) -> TailSum {
        match *self {
            TailModel::Finite => TailSum::ZERO,
            TailModel::Unknown => TailSum::unknown(),
            TailModel::Closed { start, coeff_lo, coeff_hi, rate, exponent, offset } => {
                let n0 = start.max(from);
                let (lo, _) = closed_tail(n0, rate, exponent, offset, weighted);
                if lo == f64::INFINITY {
                    return TailSum::divergent();
                }
                let w = if weighted { 1.0 } else { 0.0 };
                let term = |n: f64| fmath::exp(rate * n - exponent * fmath::ln(n + offset) + w * fmath::ln(n));
                let mut explicit = 0.0;
                let mut n = n0;
                while n < n0 + EXPLICIT_TAIL_TERMS {
                    n += 1;
                    let t = term(n as f64);
                    explicit += t;
                    if t <= 1e-18 * explicit {
                        break;
                    }
                }
                let (rlo, rhi) = closed_tail(n, rate, exponent, offset, weighted);
                let q = exponent - w;
                let estimate = if fmath::abs(rate) <= 1e-15 {
                    fmath::powf(n as f64 + 0.5 + offset, 1.0 - q) / (q - 1.0)
                } else {
                    rlo
                };
                let mid = 0.5 * (coeff_lo + coeff_hi);
                TailSum {
                    lower: coeff_lo * (explicit + rlo),
                    value: mid * (explicit + estimate.clamp(rlo, rhi)),
                    upper: coeff_hi * (explicit + rhi),
                    divergent: false,
                }
            }
        }
    }
}

/// Bounds on `sum_{n>N} n^w e^{r n} (n+h)^{-p}`; `(inf, inf)` when divergent.
fn closed_tail(start: usize, rate: f64, p: f64, h: f64, weighted: bool) -> (f64, f64) {
    let w = if weighted { 1.0 } else { 0.0 };
    let m = start as f64 + 1.0;
    let q = p - w;
    let integral = |from: f64| -> f64 { fmath::powf(from + h, 1.0 - q) / (q - 1.0) };
    if rate > 1e-15 {
        return (f64::INFINITY, f64::INFINITY);
    }
    if rate >= -1e-15 {
        if q <= 1.0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let shrink = if weighted { m / (m + h) } else { 1.0 };
        return (shrink * integral(m), integral(m - 1.0));
    }
    let x = fmath::exp(rate);
    let first = fmath::powf(m, w) * fmath::powf(m + h, -p) * fmath::powf(x, m);
    let upper_geo = if q >= 0.0 {
        fmath::powf(m + h, -q) * fmath::powf(x, m) / (1.0 - x)
    } else if weighted {
        // n^w (n+h)^{-p} <= n for p >= 0
        fmath::powf(x, m) * (m - (m - 1.0) * x) / ((1.0 - x) * (1.0 - x))
    } else {
        fmath::powf(x, m) / (1.0 - x)
    };
    let upper = if q > 1.0 { upper_geo.min(integral(m - 1.0)) } else { upper_geo };
    (first, upper)
}

/// `Phi = phi_tau` on each branch, with per-branch enclosures and a tail model.
#[derive(Debug, Clone)]
pub struct InducedPotential {
    scheme: InducingScheme,
    phi: Option<Potential>,
    /// Accumulated shift `S` in `Phi - S tau`.
    shift: f64,
    pub branch_inf: Vec<f64>,
    pub branch_sup: Vec<f64>,
    pub tail: TailModel,
    pub unbounded: bool,
    /// `Phi - S tau` at the preimage of the base midpoint in each branch.
    reference: Vec<f64>,
}

/// Lifts `phi` to the scheme. Constant potentials on one-branch-per-time schemes get a closed tail.
pub fn induced_potential(phi: &Potential, scheme: &InducingScheme) -> Result<InducedPotential> {
    let mut inf = Vec::with_capacity(scheme.branches.len());
    let mut sup = Vec::with_capacity(scheme.branches.len());
    let mut unbounded = false;
    for b in &scheme.branches {
        let (lo, hi, _) = phi.birkhoff_range(&scheme.map, &b.word, &b.span);
        unbounded |= !lo.is_finite() || !hi.is_finite();
        inf.push(lo);
        sup.push(hi);
    }
    let (pinf, psup) = phi.bounds();
    let tail = match scheme.tail {
        TailShape::Finite => TailModel::Finite,
        TailShape::OnePerTime if pinf == psup && pinf.is_finite() => TailModel::Closed {
            start: scheme.horizon,
            coeff_lo: 1.0,
            coeff_hi: 1.0,
            rate: pinf,
            exponent: 0.0,
            offset: 0.0,
        },
        _ => TailModel::Unknown,
    };
    let reference = reference_points(scheme, phi, &inf, &sup);
    Ok(InducedPotential {
        scheme: scheme.clone(),
        phi: Some(phi.clone()),
        shift: 0.0,
        branch_inf: inf,
        branch_sup: sup,
        tail,
        unbounded,
        reference,
    })
}

fn reference_points(scheme: &InducingScheme, phi: &Potential, inf: &[f64], sup: &[f64]) -> Vec<f64> {
    let y = 0.5 * (scheme.base.lo + scheme.base.hi);
    (0..scheme.branches.len())
        .map(|i| {
            if inf[i] == sup[i] {
                return sup[i];
            }
            let x = scheme.branch_inverse(i, y);
            let v = phi.birkhoff_along(&scheme.map, &scheme.branches[i].word, x);
            if v.is_finite() {
                v.clamp(inf[i], sup[i])
            } else {
                0.5 * (inf[i] + sup[i])
            }
        })
        .collect()
}

impl InducedPotential {
    /// Branchwise-constant induced potential given directly by its values.
    pub fn from_values(scheme: &InducingScheme, values: Vec<f64>, tail: TailModel) -> Result<Self> {
        if values.len() != scheme.branches.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} branches",
                values.len(),
                scheme.branches.len()
            )));
        }
        let unbounded = values.iter().any(|v| !v.is_finite());
        Ok(InducedPotential {
            scheme: scheme.clone(),
            phi: None,
            shift: 0.0,
            branch_inf: values.clone(),
            branch_sup: values.clone(),
            tail,
            unbounded,
            reference: values,
        })
    }

    /// Induced potential of `phi` with branch enclosures supplied by a closed form.
    pub fn from_ranges(scheme: &InducingScheme, phi: &Potential, inf: Vec<f64>, sup: Vec<f64>, tail: TailModel) -> Result<Self> {
        if inf.len() != scheme.branches.len() || sup.len() != inf.len() {
            return Err(Error::InvalidParameter("one enclosure per branch is required".into()));
        }
        let unbounded = inf.iter().chain(&sup).any(|v| !v.is_finite());
        let reference = reference_points(scheme, phi, &inf, &sup);
        Ok(InducedPotential {
            scheme: scheme.clone(),
            phi: Some(phi.clone()),
            shift: 0.0,
            branch_inf: inf,
            branch_sup: sup,
            tail,
            unbounded,
            reference,
        })
    }

    /// As [`from_ranges`](Self::from_ranges) with the reference values supplied by the caller.
    pub fn from_parts(
        scheme: &InducingScheme,
        phi: &Potential,
        inf: Vec<f64>,
        sup: Vec<f64>,
        reference: Vec<f64>,
        tail: TailModel,
    ) -> Result<Self> {
        if inf.len() != scheme.branches.len() || sup.len() != inf.len() || reference.len() != inf.len() {
            return Err(Error::InvalidParameter("one enclosure per branch is required".into()));
        }
        let unbounded = inf.iter().chain(&sup).any(|v| !v.is_finite());
        let reference = reference.iter().zip(inf.iter().zip(&sup)).map(|(r, (lo, hi))| r.max(*lo).min(*hi)).collect();
        Ok(InducedPotential {
            scheme: scheme.clone(),
            phi: Some(phi.clone()),
            shift: 0.0,
            branch_inf: inf,
            branch_sup: sup,
            tail,
            unbounded,
            reference,
        })
    }

    pub fn with_tail(mut self, tail: TailModel) -> Self {
        self.tail = tail;
        self
    }

    pub fn scheme(&self) -> &InducingScheme {
        &self.scheme
    }

    /// Representative value of `Phi - S tau` on each branch.
    pub fn reference_values(&self) -> &[f64] {
        &self.reference
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.branch_sup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branch_sup.is_empty()
    }

    pub fn taus(&self) -> Vec<usize> {
        self.scheme.branches.iter().map(|b| b.tau).collect()
    }

    /// True when every branch enclosure is a single value.
    pub fn is_branchwise_constant(&self) -> bool {
        self.branch_inf.iter().zip(&self.branch_sup).all(|(a, b)| a == b)
    }

    /// `Phi(x) - S tau(x)`, or `None` outside the stored branches.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let i = self.scheme.branch_at(x)?;
        let b = &self.scheme.branches[i];
        let base = match &self.phi {
            Some(phi) => phi.birkhoff_along(&self.scheme.map, &b.word, x) - self.shift * b.tau as f64,
            None => self.branch_sup[i],
        };
        Some(base)
    }

    /// `Phi - S tau`.
    pub fn shifted(&self, s: f64) -> InducedPotential {
        let mut out = self.clone();
        for (i, b) in self.scheme.branches.iter().enumerate() {
            out.branch_inf[i] -= s * b.tau as f64;
            out.branch_sup[i] -= s * b.tau as f64;
        }
        for (r, b) in out.reference.iter_mut().zip(&self.scheme.branches) {
            *r -= s * b.tau as f64;
        }
        out.shift += s;
        out.tail = self.tail.shifted(s);
        out
    }

    /// Range of `Phi - S tau` on the cylinder `X_{path[0]} ∩ F^{-1} X_{path[1]} ∩ ...`.
    pub fn cylinder_range(&self, path: &[usize]) -> (f64, f64) {
        let sch = &self.scheme;
        let first = &sch.branches[path[0]];
        let Some(phi) = &self.phi else {
            return (self.branch_inf[path[0]], self.branch_sup[path[0]]);
        };
        if path.len() == 1 {
            return (self.branch_inf[path[0]], self.branch_sup[path[0]]);
        }
        let mut span = sch.branches[path[path.len() - 1]].span;
        for &i in path[..path.len() - 1].iter().rev() {
            let (x, y) = (sch.branch_inverse(i, span.lo), sch.branch_inverse(i, span.hi));
            span = if sch.branches[i].increasing {
                Span { lo: x, hi: y, ..span }
            } else {
                Span { lo: y, hi: x, lo_closed: span.hi_closed, hi_closed: span.lo_closed }
            };
        }
        let (lo, hi, _) = phi.birkhoff_range(&sch.map, &first.word, &span);
        let s = self.shift * first.tau as f64;
        (lo - s, hi - s)
    }

    fn cylinder_oscillation(&self, path: &[usize]) -> f64 {
        let (lo, hi) = self.cylinder_range(path);
        hi - lo
    }
}

/// `Z_0(Phi) = sum_i e^{sup Phi|X_i}` with its tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Z0Report {
    pub finite_part: f64,
    pub value: Enclosure,
    pub tail: TailSum,
    pub finite: bool,
}

pub fn z0(induced: &InducedPotential) -> Z0Report {
    let finite_part: f64 = induced.branch_sup.iter().map(|s| fmath::exp(*s)).sum();
    let tail = induced.tail.sum(false);
    let value = Enclosure::new(finite_part + tail.lower, finite_part + tail.value, finite_part + tail.upper);
    Z0Report { finite_part, value, tail, finite: !induced.unbounded && tail.is_bounded() && finite_part.is_finite() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SviReport {
    /// `V_n(Phi)` over cylinders built from the first `branches_used` branches.
    pub variations: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub branches_used: usize,
    /// Fit `V_n <= C gamma^n` as `(C, gamma)`; `gamma = 0` when all variations vanish.
    pub decay: Option<(f64, f64)>,
    pub weakly_holder: bool,
}

/// Variations of the induced potential with respect to the induced cylinder partition.
pub fn svi_report(induced: &InducedPotential, n_max: usize, max_branches: usize) -> SviReport {
    let m = max_branches.min(induced.len()).max(1);
    let mut variations = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut best: f64 = 0.0;
        let mut path = vec![0usize; n];
        loop {
            best = best.max(induced.cylinder_oscillation(&path));
            let mut k = n;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                path[k] += 1;
                if path[k] < m {
                    break;
                }
                path[k] = 0;
                if k == 0 {
                    k = usize::MAX;
                    break;
                }
            }
            if k == usize::MAX {
                break;
            }
        }
        variations.push(best);
    }
    let partial_sums = variations
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let tiny = 1e-13;
    let (decay, weakly_holder) = if variations.iter().all(|v| *v <= tiny) {
        (Some((0.0, 0.0)), true)
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) = variations
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > tiny)
            .map(|(i, v)| ((i + 1) as f64, fmath::ln(*v)))
            .unzip();
        match numeric::fit_line(&xs, &ys) {
            Some(f) if f.slope < 0.0 => {
                let c = xs.iter().zip(&ys).map(|(x, y)| y - f.slope * x).fold(f64::NEG_INFINITY, f64::max);
                (Some((fmath::exp(c), fmath::exp(f.slope))), true)
            }
            _ => (None, false),
        }
    };
    SviReport { variations, partial_sums, branches_used: m, decay, weakly_holder }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SviSumReport {
    /// `n V_n(phi)` (upper bounds).
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub verdict: SeriesVerdict,
    pub satisfied: bool,
}

/// `sum_n n V_n(phi)`; finiteness gives summable induced variations for every scheme.
pub fn svi_sufficient_a(phi: &Potential, map: &PiecewiseMonotoneMap, n_max: usize) -> Result<SviSumReport> {
    let mut terms = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        terms.push(n as f64 * phi.variation_n(map, n)?.upper);
    }
    let partial_sums: Vec<f64> = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let verdict = if terms.iter().all(|t| *t == 0.0) {
        SeriesVerdict::Convergent { model: crate::pressure::GrowthModel::Bounded, rate: f64::NEG_INFINITY }
    } else {
        let logs: Vec<f64> = terms.iter().map(|t| if *t > 0.0 { fmath::ln(*t) } else { f64::NEG_INFINITY }).collect();
        // Terms that stop decaying are a divergence signal even when the partial sums are small.
        let tail = &terms[numeric::final_half(terms.len())];
        let flat = tail.len() >= 2 && tail.iter().all(|t| *t >= 0.9 * tail[0]) && tail[0] > 0.0;
        if flat {
            SeriesVerdict::Divergent { model: crate::pressure::GrowthModel::Linear, rate: tail[tail.len() - 1] }
        } else {
            DivergencePolicy::default().classify(&logs)
        }
    };
    Ok(SviSumReport { satisfied: verdict.is_convergent(), terms, partial_sums, verdict })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLengthReport {
    /// `sum_{k < tau_i} |f^k(X_i)|^alpha` per branch.
    pub sums: Vec<f64>,
    pub sup: f64,
}

/// Per-branch sums of `|f^k(X_i)|^alpha` and their supremum.
pub fn svi_sufficient_b(scheme: &InducingScheme, alpha: f64) -> Result<BlockLengthReport> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    let sums: Vec<f64> = (0..scheme.branches.len())
        .map(|i| {
            (0..scheme.branches[i].tau)
                .map(|k| {
                    let (a, c) = scheme.block_image(i, k);
                    if alpha == 0.0 {
                        1.0
                    } else {
                        fmath::powf(c - a, alpha)
                    }
                })
                .sum()
        })
        .collect();
    let sup = sums.iter().cloned().fold(0.0, f64::max);
    Ok(BlockLengthReport { sums, sup })
}

/// How mass is spread inside each branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WithinBranch {
    /// Normalized Lebesgue measure on `X_i`.
    Uniform,
    /// Push-forward of the measure itself under the inverse branches, to the given depth.
    Conjugated { depth: usize },
}

/// Discrete branch masses `mu_F(X_i)` plus tail enclosures.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchWeights {
    pub weights: Vec<f64>,
    /// Mass of the branches above the horizon.
    pub tail_mass: TailSum,
    /// `sum_{tail} tau_i mu_F(X_i)`.
    pub tail_tau_mass: TailSum,
    pub profile: WithinBranch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub value: Enclosure,
    /// `Lambda = sum_i tau_i mu_F(X_i)`.
    pub lambda: Enclosure,
}

/// `int g dmu = (1/Lambda) sum_i sum_{k<tau_i} int_{X_i} g∘f^k dmu_F`.
pub fn project_integral<G: Fn(f64) -> f64>(scheme: &InducingScheme, mu: &BranchWeights, g: G) -> Result<Projection> {
    if mu.weights.len() != scheme.branches.len() {
        return Err(Error::InvalidParameter("one weight per branch is required".into()));
    }
    if mu.tail_tau_mass.divergent || !mu.tail_tau_mass.upper.is_finite() {
        return Err(Error::Refused("the mean inducing time diverges, so the measure does not project".into()));
    }
    let lambda_finite: f64 = scheme.branches.iter().zip(&mu.weights).map(|(b, p)| b.tau as f64 * p).sum();
    let lambda = Enclosure::new(lambda_finite + mu.tail_tau_mass.lower, lambda_finite, lambda_finite + mu.tail_tau_mass.upper);
    let g_bound = (0..=256).map(|s| fmath::abs(g(s as f64 / 256.0))).fold(0.0, f64::max);
    let mut total = 0.0;
    let mut skipped = 0.0;
    for (i, p) in mu.weights.iter().enumerate() {
        let block_mass = p * scheme.branches[i].tau as f64;
        if block_mass <= NEGLIGIBLE_BLOCK_MASS * lambda_finite {
            skipped += block_mass;
            continue;
        }
        total += p * block_average(scheme, mu, i, &g);
    }
    let value = total / lambda_finite;
    let slack = g_bound * (mu.tail_tau_mass.upper + skipped) / lambda_finite;
    Ok(Projection { value: Enclosure::new(value - 2.0 * slack, value, value + 2.0 * slack), lambda })
}

/// Average over `X_i` (normalized measure on the branch) of `sum_{k<tau_i} g∘f^k`.
fn block_average<G: Fn(f64) -> f64>(scheme: &InducingScheme, mu: &BranchWeights, i: usize, g: &G) -> f64 {
    let b = &scheme.branches[i];
    let block = |x: f64| -> f64 {
        let mut y = x;
        let mut s = 0.0;
        for &w in &b.word {
            s += g(y);
            y = scheme.map.branches()[w as usize].eval(y);
        }
        s
    };
    match mu.profile {
        WithinBranch::Uniform => {
            let panels = 4 + b.tau.min(64);
            numeric::integrate(block, b.lo(), b.hi(), panels) / b.width()
        }
        WithinBranch::Conjugated { depth } => {
            // The pullback chain of `y` is the block orbit in reverse.
            let pulled = |y: f64| -> f64 {
                let mut x = y;
                let mut s = 0.0;
                for &w in b.word.iter().rev() {
                    x = scheme.map.branches()[w as usize].inverse(x);
                    s += g(x);
                }
                s
            };
            conjugated_average(scheme, mu, depth.saturating_sub(1), &pulled)
        }
    }
}

fn conjugated_average(scheme: &InducingScheme, mu: &BranchWeights, depth: usize, h: &dyn Fn(f64) -> f64) -> f64 {
    let base = scheme.base;
    if depth == 0 {
        return numeric::integrate(h, base.lo, base.hi, 4) / (base.hi - base.lo);
    }
    let mass: f64 = mu.weights.iter().sum();
    let mut acc = 0.0;
    for (j, p) in mu.weights.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let inner = |y: f64| h(scheme.branch_inverse(j, y));
        acc += p * conjugated_average(scheme, mu, depth - 1, &inner);
    }
    acc / mass
}

/// Suspension of a scheme by its inducing times.
#[derive(Debug, Clone)]
pub struct YoungTower {
    pub scheme: InducingScheme,
    /// Floors `(branch, level)` with `level < tau_branch`.
    pub floors: Vec<(usize, usize)>,
}

pub fn young_tower(scheme: &InducingScheme) -> YoungTower {
    let floors = scheme
        .branches
        .iter()
        .enumerate()
        .flat_map(|(i, b)| (0..b.tau).map(move |j| (i, j)))
        .collect();
    YoungTower { scheme: scheme.clone(), floors }
}

impl YoungTower {
    pub fn floor_count(&self) -> usize {
        self.floors.len()
    }

    /// `pi(x, j) = f^j(x)` for `x` in branch `i`.
    pub fn project(&self, x: f64, branch: usize, level: usize) -> f64 {
        let b = &self.scheme.branches[branch];
        apply_word(&self.scheme.map, &b.word[..level], x)
    }

    /// One step of the tower dynamics; `None` if the image leaves the stored branches.
    pub fn step(&self, x: f64, branch: usize, level: usize) -> Option<(f64, usize, usize)> {
        if level + 1 < self.scheme.branches[branch].tau {
            Some((x, branch, level + 1))
        } else {
            let y = self.scheme.branch_apply(branch, x);
            let i = self.scheme.branch_at(y)?;
            Some((y, i, 0))
        }
    }

    /// Largest `|pi(f_Delta(p)) - f(pi(p))|` over sampled points of every floor.
    pub fn commutation_error(&self, samples_per_floor: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for &(i, j) in &self.floors {
            let b = &self.scheme.branches[i];
            for s in 1..=samples_per_floor {
                let x = b.lo() + b.width() * s as f64 / (samples_per_floor + 1) as f64;
                if let Some((y, i2, j2)) = self.step(x, i, j) {
                    let lhs = self.project(y, i2, j2);
                    let rhs = self.scheme.map.branches()[b.word[j] as usize].eval(self.project(x, i, j));
                    let d = fmath::abs(lhs - rhs);
                    // On circle maps 0 and 1 are the same point.
                    let d = if self.scheme.map.is_circle() { d.min(fmath::abs(d - 1.0)) } else { d };
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    /// Checks on sampled base points that the first return to floor 0 takes `tau_i` steps and lands at `F(x)`.
    pub fn first_return_matches(&self, samples_per_branch: usize) -> bool {
        for (i, b) in self.scheme.branches.iter().enumerate() {
            for s in 1..=samples_per_branch {
                let x = b.lo() + b.width() * s as f64 / (samples_per_branch + 1) as f64;
                let mut state = (x, i, 0usize);
                let mut steps = 0;
                loop {
                    match self.step(state.0, state.1, state.2) {
                        Some(next) => {
                            steps += 1;
                            state = next;
                            if state.2 == 0 {
                                break;
                            }
                        }
                        None => {
                            steps += b.tau - state.2;
                            state = (self.scheme.branch_apply(i, x), usize::MAX, 0);
                            break;
                        }
                    }
                }
                if steps != b.tau || fmath::abs(state.0 - self.scheme.branch_apply(i, x)) > 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    /// `int psi_Delta dmu_Delta` with `mu_Delta(X_i, j) = mu_F(X_i) / Lambda`, floor by floor.
    pub fn integral<G: Fn(f64) -> f64>(&self, mu: &BranchWeights, g: G) -> Result<f64> {
        let lambda: f64 = self.scheme.branches.iter().zip(&mu.weights).map(|(b, p)| b.tau as f64 * p).sum();
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter("branch weights carry no mass".into()));
        }
        let mut acc = 0.0;
        for &(i, j) in &self.floors {
            let b = &self.scheme.branches[i];
            let p = mu.weights[i];
            if p == 0.0 {
                continue;
            }
            let floor = |x: f64| g(self.project(x, i, j));
            acc += p * numeric::integrate(floor, b.lo(), b.hi(), 4 + b.tau.min(64)) / b.width();
        }
        Ok(acc / lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_first_return_matches_closed_form() {
        let f = PiecewiseMonotoneMap::doubling();
        let base = Span { lo: 0.5, hi: 1.0, lo_closed: false, hi_closed: true };
        let s = InducingScheme::first_return(&f, base, 12).unwrap();
        assert_eq!(s.branches().len(), 12);
        for (n, b) in (1..=12).zip(s.branches()) {
            assert_eq!(b.tau, n);
            assert!((b.lo() - (0.5 + 0.5f64.powi(n as i32 + 1))).abs() < 1e-15);
            assert!((b.hi() - (0.5 + 0.5f64.powi(n as i32))).abs() < 1e-15);
            assert!(!b.span.lo_closed && b.span.hi_closed);
        }
        assert!(s.rejected().is_empty());
    }

    #[test]
    fn constant_potential_lifts_to_multiple_of_tau() {
        let s = InducingScheme::doubling_half(10).unwrap();
        let ind = induced_potential(&Potential::constant(-0.3), &s).unwrap();
        for (b, v) in s.branches().iter().zip(&ind.branch_sup) {
            assert!((v + 0.3 * b.tau as f64).abs() < 1e-12);
        }
        assert!(ind.is_branchwise_constant());
    }

    #[test]
    fn shift_composes_additively() {
        let s = InducingScheme::doubling_half(8).unwrap();
        let ind = induced_potential(&Potential::hk(-0.5, 2).unwrap(), &s).unwrap();
        let a = ind.shifted(0.1).shifted(0.2);
        let b = ind.shifted(0.3);
        for (x, y) in a.branch_sup.iter().zip(&b.branch_sup) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(ind.shifted(0.0).branch_sup, ind.branch_sup);
    }

    #[test]
    fn single_branch_tower_is_the_base() {
        let f = PiecewiseMonotoneMap::full_linear(2).unwrap();
        let s = InducingScheme::first_return(&f, Span::closed(0.0, 1.0), 1).unwrap();
        assert_eq!(s.branches().len(), 2);
        let t = young_tower(&s);
        assert_eq!(t.floor_count(), 2);
        let (y, _, level) = t.step(0.3, 0, 0).unwrap();
        assert_eq!(level, 0);
        assert!((y - 0.6).abs() < 1e-15);
    }

    #[test]
    fn finite_tail_sums_are_zero() {
        assert_eq!(TailModel::Finite.sum(true), TailSum::ZERO);
        let t = TailModel::Closed { start: 10, coeff_lo: 1.0, coeff_hi: 1.0, rate: 0.0, exponent: 2.0, offset: 1.0 };
        let s = t.sum(false);
        // sum_{n>10} (n+1)^-2 lies between 1/12 and 1/11
        assert!(s.lower >= 1.0 / 12.0 - 1e-15 && s.upper <= 1.0 / 11.0 + 1e-15);
        assert!(t.sum(true).divergent);
        assert!(t.shifted(-0.1).sum(false).divergent);
    }
}
