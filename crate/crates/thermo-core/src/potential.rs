//! Potentials on `[0, 1]`, Birkhoff sums and regularity statistics.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::interval_map::{BranchKind, Interval, PiecewiseMonotoneMap, RealFn};
use crate::numeric::Enclosure;

/// Closed-form expression of a potential piece.
#[derive(Clone)]
pub enum Expr {
    Const(f64),
    Affine { slope: f64, offset: f64 },
    /// `scale * x^exponent` for `x >= 0`.
    Power { scale: f64, exponent: f64 },
    /// `scale / ln x`, extended by 0 at `x = 0`.
    InvLog { scale: f64 },
    /// `amp * sin(pi * freq * x)`.
    Sine { amp: f64, freq: f64 },
    /// Pointwise function; `monotone` enables endpoint evaluation.
    Custom { f: RealFn, monotone: bool },
}

impl core::fmt::Debug for Expr {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "Const({c})"),
            Expr::Affine { slope, offset } => write!(f, "Affine({slope}, {offset})"),
            Expr::Power { scale, exponent } => write!(f, "Power({scale}, {exponent})"),
            Expr::InvLog { scale } => write!(f, "InvLog({scale})"),
            Expr::Sine { amp, freq } => write!(f, "Sine({amp}, {freq})"),
            Expr::Custom { monotone, .. } => write!(f, "Custom(monotone={monotone})"),
        }
    }
}

const CUSTOM_SAMPLES: usize = 512;

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Affine { slope, offset } => slope * x + offset,
            Expr::Power { scale, exponent } => scale * fmath::powf(x.max(0.0), *exponent),
            Expr::InvLog { scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    scale / fmath::ln(x)
                }
            }
            Expr::Sine { amp, freq } => {
                let r = fmath::fmod(freq * x, 2.0);
                amp * fmath::sin(fmath::PI * r)
            }
            Expr::Custom { f, .. } => f(x),
        }
    }

    /// `(inf, sup, exact)` of the continuous extension over `[a, b]`.
    pub fn range(&self, a: f64, b: f64) -> (f64, f64, bool) {
        let ends = |e: &Expr| {
            let (u, v) = (e.eval(a), e.eval(b));
            (u.min(v), u.max(v), true)
        };
        match self {
            Expr::Const(c) => (*c, *c, true),
            Expr::Affine { .. } | Expr::Power { .. } | Expr::InvLog { .. } => ends(self),
            Expr::Custom { monotone: true, .. } => ends(self),
            Expr::Sine { amp, freq } => {
                let first = fmath::floor(freq * a - 0.5) + 1.0;
                let last = fmath::floor(freq * b - 0.5);
                let peak = fmath::abs(*amp);
                if last - first >= 1.0 {
                    return (-peak, peak, true);
                }
                let (mut lo, mut hi, _) = ends(self);
                if last >= first {
                    let v = self.eval((first + 0.5) / freq);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi, true)
            }
            Expr::Custom { f, monotone: false } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..=CUSTOM_SAMPLES {
                    let v = f(a + (b - a) * i as f64 / CUSTOM_SAMPLES as f64);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi, false)
            }
        }
    }
}

/// Interval with explicit endpoint membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Span {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Span { lo, hi, lo_closed: true, hi_closed: true }
    }

    pub fn point(x: f64) -> Self {
        Span::closed(x, x)
    }

    pub fn from_interval(c: &Interval) -> Self {
        Span { lo: c.lo(), hi: c.hi(), lo_closed: true, hi_closed: c.closed_hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn contains(&self, x: f64) -> bool {
        (x > self.lo || (self.lo_closed && x == self.lo)) && (x < self.hi || (self.hi_closed && x == self.hi))
    }

    pub fn intersect(&self, o: &Span) -> Span {
        let (lo, lo_closed) = if self.lo > o.lo {
            (self.lo, self.lo_closed)
        } else if o.lo > self.lo {
            (o.lo, o.lo_closed)
        } else {
            (self.lo, self.lo_closed && o.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < o.hi {
            (self.hi, self.hi_closed)
        } else if o.hi < self.hi {
            (o.hi, o.hi_closed)
        } else {
            (self.hi, self.hi_closed && o.hi_closed)
        };
        Span { lo, hi, lo_closed, hi_closed }
    }
}

/// One piece of a potential.
#[derive(Debug, Clone)]
pub struct Piece {
    pub span: Span,
    pub expr: Expr,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool, expr: Expr) -> Self {
        Piece { span: Span { lo, hi, lo_closed, hi_closed }, expr }
    }
}

/// A potential `phi : [0, 1] -> R`.
#[derive(Debug, Clone)]
pub struct Potential {
    pieces: Vec<Piece>,
    overrides: Vec<(f64, f64)>,
    offset: f64,
    unbounded: bool,
    name: String,
}

/// Regularity statistics at one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub n: usize,
    pub variation: Enclosure,
    pub beta: Enclosure,
    pub bv_lower: f64,
}

/// Outcome of the bounded-range test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeMargin {
    Bounded(f64),
    Unbounded,
}

impl RangeMargin {
    pub fn value(&self) -> Option<f64> {
        match self {
            RangeMargin::Bounded(v) => Some(*v),
            RangeMargin::Unbounded => None,
        }
    }
}

/// Lower bounds on the BV seminorm along nested grids.
#[derive(Debug, Clone, PartialEq)]
pub struct BvScan {
    pub grid_sizes: Vec<usize>,
    pub bounds: Vec<f64>,
    /// True when the bound keeps growing by a fixed fraction at every grid doubling.
    pub divergent: bool,
}

const SPLIT_BUDGET: usize = 200_000;
const HK_EXPLICIT_PIECES: usize = 120;

impl Potential {
    /// Builds a potential from ordered pieces covering `[0, 1]`.
    pub fn new(pieces: Vec<Piece>, overrides: Vec<(f64, f64)>, name: impl Into<String>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidParameter("potential needs at least one piece".into()));
        }
        if pieces[0].span.lo != 0.0 || pieces[pieces.len() - 1].span.hi != 1.0 {
            return Err(Error::InvalidParameter("potential pieces must cover [0, 1]".into()));
        }
        for w in pieces.windows(2) {
            if w[0].span.hi != w[1].span.lo || w[0].span.hi_closed == w[1].span.lo_closed {
                return Err(Error::InvalidParameter(format!(
                    "pieces must abut with exactly one owner at {}",
                    w[0].span.hi
                )));
            }
        }
        Ok(Potential { pieces, overrides, offset: 0.0, unbounded: false, name: name.into() })
    }

    pub fn constant(c: f64) -> Self {
        Potential::new(vec![Piece::new(0.0, 1.0, true, true, Expr::Const(c))], vec![], format!("constant({c})"))
            .expect("constant potential is valid")
    }

    /// `-1/log x` on `(0, 1/2)`, `1/log 2` on `[1/2, 1]`, and `0` at `0`.
    pub fn example1() -> Self {
        let pieces = vec![
            Piece::new(0.0, 0.5, true, false, Expr::InvLog { scale: -1.0 }),
            Piece::new(0.5, 1.0, true, true, Expr::Const(1.0 / fmath::LN_2)),
        ];
        Potential::new(pieces, vec![(0.0, 0.0)], "example1").expect("valid")
    }

    /// Sum of bumps `4^-n sin(4^(n+1) pi x)` on `[2^-n, 2^(1-n)]`, truncated below `2^-40`.
    pub fn example2() -> Self {
        let levels = 40;
        let mut pieces = vec![Piece::new(0.0, fmath::powi(2.0, -levels), true, false, Expr::Const(0.0))];
        for n in (1..=levels).rev() {
            let lo = fmath::powi(2.0, -n);
            let hi = fmath::powi(2.0, 1 - n);
            let expr = Expr::Sine { amp: fmath::powi(4.0, -n), freq: fmath::powi(4.0, n + 1) };
            pieces.push(Piece::new(lo, hi, true, n == 1, expr));
        }
        Potential::new(pieces, vec![], "example2").expect("valid")
    }

    /// Step potential equal to `a_k` on `(2^(-k-1), 2^-k]` with `a_k = b` for `k < K`
    /// and `a_k = gamma log((k+1)/(k+2))` after, and `0` at `0`.
    pub fn step_family(b: f64, k_switch: usize, gamma: f64) -> Result<Self> {
        if !b.is_finite() || !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidParameter(format!("need finite b and gamma >= 0, got b={b}, gamma={gamma}")));
        }
        if k_switch > 900 {
            return Err(Error::InvalidParameter("switch index must be at most 900".into()));
        }
        let coeff = move |k: usize| -> f64 {
            if k < k_switch {
                b
            } else {
                gamma * fmath::ln((k as f64 + 1.0) / (k as f64 + 2.0))
            }
        };
        let explicit = HK_EXPLICIT_PIECES.max(k_switch + 1);
        let tail_hi = fmath::powi(2.0, -(explicit as i32));
        let tail: RealFn = Arc::new(move |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            let (m, e) = fmath::frexp(x);
            let k = if m > 0.5 { -e } else { 1 - e };
            coeff(k.max(0) as usize)
        });
        let mut pieces = vec![
            Piece::new(0.0, tail_hi, true, true, Expr::Custom { f: tail, monotone: true }),
        ];
        for k in (0..explicit).rev() {
            let lo = fmath::powi(2.0, -(k as i32) - 1);
            let hi = fmath::powi(2.0, -(k as i32));
            pieces.push(Piece::new(lo, hi, false, true, Expr::Const(coeff(k))));
        }
        let name = if gamma == 2.0 { format!("hk({b},{k_switch})") } else { format!("step({b},{k_switch},{gamma})") };
        Potential::new(pieces, vec![(0.0, 0.0)], name)
    }

    /// The Hofbauer-Keller step potential.
    pub fn hk(b: f64, k_switch: usize) -> Result<Self> {
        Self::step_family(b, k_switch, 2.0)
    }

    /// Limit of the step family as the switch index grows: `b` on `(0, 1]`, `0` at `0`.
    pub fn two_valued(b: f64) -> Self {
        let pieces = vec![Piece::new(0.0, 1.0, true, true, Expr::Const(b))];
        Potential::new(pieces, vec![(0.0, 0.0)], format!("two_valued({b})")).expect("valid")
    }

    /// Power law near the neutral point, affine bridge, then constant `b`.
    pub fn mp(alpha: f64, p1: f64, p2: f64, b: f64) -> Result<Self> {
        if !(0.0 < p1 && p1 < p2 && p2 < 1.0) || !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("need 0 < p1 < p2 < 1, alpha > 0 (got {p1}, {p2}, {alpha})")));
        }
        let at_p1 = -2.0 * alpha * fmath::powf(p1, alpha);
        let slope = (b - at_p1) / (p2 - p1);
        let pieces = vec![
            Piece::new(0.0, p1, true, true, Expr::Power { scale: -2.0 * alpha, exponent: alpha }),
            Piece::new(p1, p2, false, true, Expr::Affine { slope, offset: at_p1 - slope * p1 }),
            Piece::new(p2, 1.0, false, true, Expr::Const(b)),
        ];
        Potential::new(pieces, vec![], format!("mp({alpha},{p1},{p2},{b})"))
    }

    /// `-t log|Df|`, one piece per branch.
    pub fn neg_log_deriv(map: &PiecewiseMonotoneMap, t: f64) -> Result<Self> {
        let branches = map.branches();
        let last = branches.len() - 1;
        let mut pieces = Vec::with_capacity(branches.len());
        for (i, b) in branches.iter().enumerate() {
            let expr = match &b.kind {
                BranchKind::Affine { slope, .. } => Expr::Const(-t * fmath::ln(fmath::abs(*slope))),
                BranchKind::Intermittent { alpha, .. } => {
                    let a = *alpha;
                    Expr::Custom {
                        f: Arc::new(move |x: f64| -t * fmath::ln(1.0 + (1.0 + a) * fmath::powf(x.max(0.0), a))),
                        monotone: true,
                    }
                }
                BranchKind::Custom { deriv: Some(d), .. } => {
                    let d = d.clone();
                    Expr::Custom { f: Arc::new(move |x: f64| -t * fmath::ln(fmath::abs(d(x)))), monotone: false }
                }
                BranchKind::Custom { deriv: None, .. } => {
                    return Err(Error::InvalidParameter(format!("branch {i} has no derivative")));
                }
            };
            pieces.push(Piece::new(b.lo, b.hi, true, i == last, expr));
        }
        let mut p = Potential::new(pieces, vec![], format!("neg_log_deriv({t})"))?;
        p.unbounded = t != 0.0 && map.has_critical_points();
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_unbounded(&self) -> bool {
        self.unbounded
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `phi + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.offset += c;
        p
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some(&(_, v)) = self.overrides.iter().find(|(p, _)| *p == x) {
            return v + self.offset;
        }
        let idx = self
            .pieces
            .partition_point(|p| p.span.hi < x || (p.span.hi == x && !p.span.hi_closed))
            .min(self.pieces.len() - 1);
        self.pieces[idx].expr.eval(x) + self.offset
    }

    /// `(inf, sup, exact)` over a span: piece closures plus overrides inside the span.
    pub fn range_on(&self, span: &Span) -> (f64, f64, bool) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut exact = true;
        self.for_parts(span, |part, expr| {
            let (a, b, e) = match expr {
                Some(expr) => expr.range(part.lo, part.hi),
                None => (part.lo, part.lo, true),
            };
            lo = lo.min(a);
            hi = hi.max(b);
            exact &= e;
        });
        (lo + self.offset, hi + self.offset, exact)
    }

    /// Splits a span by pieces; overrides are reported as `(point span with value in lo, None)`.
    fn for_parts<F: FnMut(Span, Option<&Expr>)>(&self, span: &Span, mut visit: F) {
        if span.is_empty() {
            return;
        }
        let start = self.pieces.partition_point(|p| p.span.hi < span.lo);
        for p in &self.pieces[start..] {
            if p.span.lo > span.hi {
                break;
            }
            let part = p.span.intersect(span);
            if !part.is_empty() {
                visit(part, Some(&p.expr));
            }
        }
        for &(x, v) in &self.overrides {
            if span.contains(x) {
                visit(Span::point(v), None);
            }
        }
    }

    /// Global `(inf, sup)`.
    pub fn bounds(&self) -> (f64, f64) {
        if self.unbounded {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let (a, b, _) = self.range_on(&Span::closed(0.0, 1.0));
        (a, b)
    }

    pub fn sup(&self) -> f64 {
        self.bounds().1
    }

    pub fn inf(&self) -> f64 {
        self.bounds().0
    }

    /// `sum_{k<n} phi(f^k x)`; fails when the orbit meets a branch boundary.
    pub fn birkhoff_sum(&self, map: &PiecewiseMonotoneMap, x: f64, n: usize) -> Result<f64> {
        let inner: Vec<f64> = map.branches()[..map.branch_count() - 1].iter().map(|b| b.hi).collect();
        let mut y = x;
        let mut total = 0.0;
        for k in 0..n {
            if inner.iter().any(|&c| fmath::abs(y - c) <= map.tolerance()) {
                return Err(Error::Boundary { x, depth: k });
            }
            total += self.eval(y);
            y = map.apply(y);
        }
        Ok(total)
    }

    /// Birkhoff sum along a prescribed itinerary, no boundary checks.
    pub fn birkhoff_along(&self, map: &PiecewiseMonotoneMap, word: &[u8], x: f64) -> f64 {
        let orbit = map.orbit_along(word, x);
        orbit[..word.len()].iter().map(|&y| self.eval(y)).sum()
    }

    /// Outer enclosure `(inf, sup, exact)` of `phi_n` over a span following `word`.
    pub fn birkhoff_range(&self, map: &PiecewiseMonotoneMap, word: &[u8], span: &Span) -> (f64, f64, bool) {
        let mut budget = SPLIT_BUDGET;
        let (a, b, e) = self.birkhoff_rec(map, word, *span, &mut budget);
        (a + self.offset * word.len() as f64, b + self.offset * word.len() as f64, e)
    }

    fn birkhoff_rec(&self, map: &PiecewiseMonotoneMap, word: &[u8], span: Span, budget: &mut usize) -> (f64, f64, bool) {
        let Some((&w, rest)) = word.split_first() else {
            return (0.0, 0.0, true);
        };
        let branch = &map.branches()[w as usize];
        let image = |s: Span| -> Span {
            let (u, v) = (branch.eval(s.lo), branch.eval(s.hi));
            if branch.increasing {
                Span { lo: u, hi: v, lo_closed: s.lo_closed, hi_closed: s.hi_closed }
            } else {
                Span { lo: v, hi: u, lo_closed: s.hi_closed, hi_closed: s.lo_closed }
            }
        };
        if *budget == 0 {
            let (a, b, _) = self.range_on(&span);
            let (c, d, _) = self.birkhoff_rec(map, rest, image(span), budget);
            return (a - self.offset + c, b - self.offset + d, false);
        }
        let mut parts: Vec<(Span, f64, f64, bool)> = Vec::new();
        let overrides = &self.overrides;
        self.for_parts(&span, |part, expr| if let Some(expr) = expr {
            let (a, b, e) = expr.range(part.lo, part.hi);
            parts.push((part, a, b, e));
        });
        for &(x, v) in overrides {
            if span.contains(x) {
                parts.push((Span::point(x), v, v, true));
            }
        }
        *budget = budget.saturating_sub(parts.len());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut exact = true;
        for (part, a, b, e) in parts {
            let (c, d, e2) = self.birkhoff_rec(map, rest, image(part), budget);
            lo = lo.min(a + c);
            hi = hi.max(b + d);
            exact &= e && e2;
        }
        (lo, hi, exact)
    }

    /// Sampled lower bound for the oscillation of `phi_n` on a cylinder.
    fn sampled_oscillation(&self, map: &PiecewiseMonotoneMap, word: &[u8], span: &Span, samples: usize) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let width = span.hi - span.lo;
        let mut record = |x: f64| {
            if span.contains(x) {
                let v = self.birkhoff_along(map, word, x);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        };
        for i in 0..=samples {
            record(span.lo + width * i as f64 / samples as f64);
        }
        for &(x, _) in &self.overrides {
            record(x);
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    /// `V_n`: largest oscillation of `phi` on an `n`-cylinder.
    pub fn variation_n(&self, map: &PiecewiseMonotoneMap, n: usize) -> Result<Enclosure> {
        let mut upper: f64 = 0.0;
        let mut lower: f64 = 0.0;
        map.for_each_cylinder(n, &[], |c| {
            let span = Span::from_interval(&c.interval);
            let (a, b, exact) = self.range_on(&span);
            upper = upper.max(b - a);
            lower = lower.max(if exact { b - a } else { self.sampled_oscillation(map, &c.word[..1], &span, 16) });
        })?;
        Ok(Enclosure::new(lower, upper, upper))
    }

    /// `beta_n`: largest oscillation of `phi_n` on an `n`-cylinder.
    pub fn beta_n(&self, map: &PiecewiseMonotoneMap, n: usize) -> Result<Enclosure> {
        let mut upper: f64 = 0.0;
        let mut lower: f64 = 0.0;
        map.for_each_cylinder(n, &[], |c| {
            let span = Span::from_interval(&c.interval);
            let (a, b, exact) = self.birkhoff_range(map, c.word, &span);
            upper = upper.max(b - a);
            let low = if exact { b - a } else { self.sampled_oscillation(map, c.word, &span, 16) };
            lower = lower.max(low);
        })?;
        Ok(Enclosure::new(lower.min(upper), upper, upper))
    }

    /// Total variation over the first `grid_size` points of the nested dyadic grid.
    pub fn bv_lower_bound(&self, grid_size: usize) -> Result<f64> {
        if grid_size < 2 {
            return Err(Error::InvalidParameter("grid size must be at least 2".into()));
        }
        let mut pts: Vec<f64> = (0..grid_size).map(nested_grid_point).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        Ok(pts.windows(2).map(|w| fmath::abs(self.eval(w[1]) - self.eval(w[0]))).sum())
    }

    /// BV lower bounds on grids of size `2^j + 1`, `j = 1..=max_log2`, with a divergence flag.
    pub fn bv_scan(&self, max_log2: u32) -> Result<BvScan> {
        let grid_sizes: Vec<usize> = (1..=max_log2).map(|j| (1usize << j) + 1).collect();
        let bounds = grid_sizes.iter().map(|&g| self.bv_lower_bound(g)).collect::<Result<Vec<f64>>>()?;
        let tail = &bounds[bounds.len().saturating_sub(4)..];
        let divergent = tail.len() >= 2 && tail.windows(2).all(|w| w[1] - w[0] > 0.05 * w[0].max(1e-300));
        Ok(BvScan { grid_sizes, bounds, divergent })
    }

    /// `h_top - (sup phi - inf phi)`.
    pub fn bounded_range_margin(&self, h_top: f64) -> RangeMargin {
        if self.unbounded {
            return RangeMargin::Unbounded;
        }
        let (a, b) = self.bounds();
        RangeMargin::Bounded(h_top - (b - a))
    }

    /// Guaranteed lower bound on the Lyapunov exponent of any equilibrium state.
    pub fn lyapunov_lower_bound(&self, h_top: f64) -> RangeMargin {
        self.bounded_range_margin(h_top)
    }

    pub fn regularity_report(&self, map: &PiecewiseMonotoneMap, n: usize, grid_size: usize) -> Result<RegularityReport> {
        Ok(RegularityReport {
            n,
            variation: self.variation_n(map, n)?,
            beta: self.beta_n(map, n)?,
            bv_lower: self.bv_lower_bound(grid_size)?,
        })
    }
}

/// `0, 1, 1/2, 1/4, 3/4, 1/8, ...`: every prefix is a refinement of the shorter ones.
fn nested_grid_point(i: usize) -> f64 {
    match i {
        0 => 0.0,
        1 => 1.0,
        _ => {
            let j = i - 1;
            let level = usize::BITS - 1 - j.leading_zeros();
            let offset = j - (1 << level);
            (2 * offset + 1) as f64 / fmath::powi(2.0, level as i32 + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> PiecewiseMonotoneMap {
        PiecewiseMonotoneMap::doubling()
    }

    #[test]
    fn birkhoff_sums_of_simple_potentials() {
        let f = doubling();
        assert_eq!(Potential::constant(0.7).birkhoff_sum(&f, 0.3, 5).unwrap(), 3.5);
        assert_eq!(Potential::example1().birkhoff_sum(&f, 0.0, 5).unwrap(), 0.0);
        let p = Potential::neg_log_deriv(&f, 1.0).unwrap();
        assert!((p.birkhoff_sum(&f, 0.3, 4).unwrap() + 4.0 * fmath::LN_2).abs() < 1e-14);
        assert!(p.birkhoff_sum(&f, 0.75, 3).is_err());
    }

    #[test]
    fn example1_variation_is_harmonic() {
        let f = doubling();
        let p = Potential::example1();
        for n in 1..=10 {
            let v = p.variation_n(&f, n).unwrap();
            assert!((v.upper - 1.0 / (n as f64 * fmath::LN_2)).abs() < 1e-12, "n={n}: {v:?}");
        }
    }

    #[test]
    fn example2_variation_decays_like_four_pi_over_two_to_n() {
        let f = doubling();
        let p = Potential::example2();
        for n in 1..=12 {
            let v = p.variation_n(&f, n).unwrap();
            let scaled = v.upper * fmath::powi(2.0, n as i32);
            assert!(scaled <= 4.0 * fmath::PI * (1.0 + 1e-9), "n={n}: {v:?}");
        }
    }

    #[test]
    fn constant_has_no_variation() {
        let f = doubling();
        let p = Potential::constant(-1.3);
        for n in 1..=6 {
            assert_eq!(p.variation_n(&f, n).unwrap().upper, 0.0);
            assert_eq!(p.beta_n(&f, n).unwrap().upper, 0.0);
        }
    }

    #[test]
    fn hk_values_and_bounds() {
        let p = Potential::hk(-0.5, 2).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(0.75), -0.5);
        assert_eq!(p.eval(0.5), -0.5);
        assert_eq!(p.eval(0.3), -0.5);
        assert!((p.eval(0.2) - 2.0 * fmath::ln(3.0 / 4.0)).abs() < 1e-15);
        let k = 200;
        let x = fmath::powi(2.0, -k) * 0.75;
        assert!((p.eval(x) - 2.0 * fmath::ln((k as f64 + 1.0) / (k as f64 + 2.0))).abs() < 1e-15);
        let (lo, hi) = p.bounds();
        assert_eq!(hi, 0.0);
        assert!((lo - 2.0 * fmath::ln(3.0 / 4.0)).abs() < 1e-15);
        assert_eq!(p.bounded_range_margin(fmath::LN_2), RangeMargin::Bounded(fmath::LN_2 + lo));
    }

    #[test]
    fn hk_beta_matches_word_enumeration() {
        let f = doubling();
        let p = Potential::hk(-1.0, 2).unwrap();
        let a = |k: usize| if k < 2 { -1.0 } else { 2.0 * fmath::ln((k as f64 + 1.0) / (k as f64 + 2.0)) };
        for n in 1..=6 {
            let beta = p.beta_n(&f, n).unwrap();
            // On [0, 2^-n) the sum ranges from 0 (fixed point) to the orbit through (2^-n-1, 2^-n].
            let mut extreme: f64 = 0.0;
            for k in n..HK_EXPLICIT_PIECES {
                let s: f64 = (0..n).map(|j| a(k - j)).sum();
                extreme = extreme.min(s);
            }
            assert!(beta.upper >= -extreme - 1e-12);
            assert!((beta.upper - beta.lower).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn bv_grid_is_nested_and_monotone() {
        let p = Potential::example1();
        let mut prev = 0.0;
        for g in 2..40 {
            let v = p.bv_lower_bound(g).unwrap();
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert!((prev - 1.0 / fmath::LN_2).abs() < 1e-12);
        assert_eq!(nested_grid_point(2), 0.5);
        assert_eq!(nested_grid_point(4), 0.75);
    }

    #[test]
    fn unbounded_flag_reported() {
        let f = PiecewiseMonotoneMap::new(
            vec![crate::interval_map::Branch::custom(
                0.0,
                1.0,
                true,
                Arc::new(|x: f64| x * x),
                Some(Arc::new(|x: f64| 2.0 * x)),
            )],
            false,
            "square",
        )
        .unwrap();
        let p = Potential::neg_log_deriv(&f, 1.0).unwrap();
        assert!(p.is_unbounded());
        assert_eq!(p.bounded_range_margin(0.0), RangeMargin::Unbounded);
        assert!(!Potential::neg_log_deriv(&f, 0.0).unwrap().is_unbounded());
    }

    #[test]
    fn mp_potential_is_continuous() {
        let p = Potential::mp(0.3, 0.05, 0.2, -1.0).unwrap();
        let e = 1e-12;
        assert!((p.eval(0.05) - p.eval(0.05 + e)).abs() < 1e-9);
        assert!((p.eval(0.2) - p.eval(0.2 + e)).abs() < 1e-9);
        assert_eq!(p.eval(0.9), -1.0);
    }
}
