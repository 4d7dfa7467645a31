//! Piecewise-monotone maps of `[0, 1]`, cylinder partitions and periodic points.
//!
//! Cylinders are half-open `[a, b)` except the rightmost one, which is closed.
//! Maps whose branches are affine with slope `±2^m` and integer offset keep
//! exact dyadic endpoints; every other map works in floating point with an
//! explicit tolerance.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::fmath;
use crate::numeric::{self, PressureEstimate};

pub const DEFAULT_TOL: f64 = 1e-12;

/// Dyadic rational `num / 2^exp`, kept normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: i128,
    exp: u32,
}

const MAX_DYADIC_EXP: u32 = 120;

impl Dyadic {
    pub fn new(num: i128, exp: u32) -> Self {
        let mut d = Dyadic { num, exp };
        d.normalize();
        d
    }

    pub fn integer(n: i64) -> Self {
        Dyadic { num: n as i128, exp: 0 }
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    fn normalize(&mut self) {
        if self.num == 0 {
            self.exp = 0;
            return;
        }
        while self.exp > 0 && self.num % 2 == 0 {
            self.num /= 2;
            self.exp -= 1;
        }
    }

    fn aligned(a: Dyadic, b: Dyadic) -> (i128, i128, u32) {
        let e = a.exp.max(b.exp);
        (a.num << (e - a.exp), b.num << (e - b.exp), e)
    }

    pub fn add(self, other: Dyadic) -> Dyadic {
        let (x, y, e) = Self::aligned(self, other);
        Dyadic::new(x + y, e)
    }

    pub fn sub(self, other: Dyadic) -> Dyadic {
        let (x, y, e) = Self::aligned(self, other);
        Dyadic::new(x - y, e)
    }

    /// Multiplies by `sign * 2^shift`.
    pub fn scale_pow2(self, shift: u32, negative: bool) -> Dyadic {
        let n = if negative { -self.num } else { self.num };
        if self.exp >= shift {
            Dyadic::new(n, self.exp - shift)
        } else {
            Dyadic::new(n << (shift - self.exp), 0)
        }
    }

    /// Divides by `sign * 2^shift`.
    pub fn div_pow2(self, shift: u32, negative: bool) -> Option<Dyadic> {
        let n = if negative { -self.num } else { self.num };
        let e = self.exp + shift;
        (e <= MAX_DYADIC_EXP).then(|| Dyadic::new(n, e))
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / fmath::powi(2.0, self.exp as i32)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (x, y, _) = Self::aligned(*self, *other);
        x.cmp(&y)
    }
}

/// An interval endpoint: exact dyadic or floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalValue {
    Dyadic(Dyadic),
    Float(f64),
}

impl IntervalValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            IntervalValue::Dyadic(d) => d.to_f64(),
            IntervalValue::Float(x) => *x,
        }
    }

    pub fn as_dyadic(&self) -> Option<Dyadic> {
        match self {
            IntervalValue::Dyadic(d) => Some(*d),
            IntervalValue::Float(_) => None,
        }
    }

    /// Strict order: exact for two dyadics, by value otherwise.
    pub fn less(&self, other: &IntervalValue) -> bool {
        pt_of(*self).less(&pt_of(*other))
    }

    pub fn max(self, other: IntervalValue) -> IntervalValue {
        if self.less(&other) {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: IntervalValue) -> IntervalValue {
        if other.less(&self) {
            other
        } else {
            self
        }
    }

    /// Equality: exact for two dyadics, within `tol` otherwise.
    pub fn same(&self, other: &IntervalValue, tol: f64) -> bool {
        match (self, other) {
            (IntervalValue::Dyadic(a), IntervalValue::Dyadic(b)) => a == b,
            _ => fmath::abs(self.to_f64() - other.to_f64()) <= tol,
        }
    }
}

impl fmt::Display for IntervalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalValue::Dyadic(d) => write!(f, "{}/2^{}", d.num, d.exp),
            IntervalValue::Float(x) => write!(f, "{x}"),
        }
    }
}

/// Point carried through refinement with an optional exact shadow.
#[derive(Debug, Clone, Copy)]
struct Pt {
    x: f64,
    d: Option<Dyadic>,
}

impl Pt {
    fn float(x: f64) -> Self {
        Pt { x, d: None }
    }

    fn exact(d: Dyadic) -> Self {
        Pt { x: d.to_f64(), d: Some(d) }
    }

    fn value(&self) -> IntervalValue {
        match self.d {
            Some(d) => IntervalValue::Dyadic(d),
            None => IntervalValue::Float(self.x),
        }
    }

    fn less(&self, o: &Pt) -> bool {
        match (self.d, o.d) {
            (Some(a), Some(b)) => a < b,
            _ => self.x < o.x,
        }
    }

    fn max(self, o: Pt) -> Pt {
        if self.less(&o) {
            o
        } else {
            self
        }
    }

    fn min(self, o: Pt) -> Pt {
        if o.less(&self) {
            o
        } else {
            self
        }
    }
}

fn pt_of(v: IntervalValue) -> Pt {
    match v {
        IntervalValue::Dyadic(d) => Pt::exact(d),
        IntervalValue::Float(x) => Pt::float(x),
    }
}

/// Sub-interval of `[0, 1]` with the half-open convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: IntervalValue,
    pub hi: IntervalValue,
    /// True when the right endpoint belongs to the interval.
    pub closed_hi: bool,
}

impl Interval {
    pub fn float(lo: f64, hi: f64, closed_hi: bool) -> Self {
        Interval { lo: IntervalValue::Float(lo), hi: IntervalValue::Float(hi), closed_hi }
    }

    pub fn lo(&self) -> f64 {
        self.lo.to_f64()
    }

    pub fn hi(&self) -> f64 {
        self.hi.to_f64()
    }

    pub fn width(&self) -> f64 {
        self.hi() - self.lo()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo() + self.hi())
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && (x < self.hi() || (self.closed_hi && x <= self.hi()))
    }

    pub fn is_exact(&self) -> bool {
        self.lo.as_dyadic().is_some() && self.hi.as_dyadic().is_some()
    }
}

/// Exact form of an affine branch `x -> sign * 2^shift * x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicAffine {
    pub shift: u32,
    pub negative: bool,
    pub offset: i64,
}

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How a branch evaluates.
#[derive(Clone)]
pub enum BranchKind {
    /// `slope * x + offset`.
    Affine { slope: f64, offset: f64, exact: Option<DyadicAffine> },
    /// `x + x^(1+alpha) - lift`, the Manneville-Pomeau branches.
    Intermittent { alpha: f64, lift: f64 },
    /// User function with optional derivative.
    Custom { eval: RealFn, deriv: Option<RealFn> },
}

impl fmt::Debug for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchKind::Affine { slope, offset, exact } => f
                .debug_struct("Affine")
                .field("slope", slope)
                .field("offset", offset)
                .field("exact", exact)
                .finish(),
            BranchKind::Intermittent { alpha, lift } => {
                f.debug_struct("Intermittent").field("alpha", alpha).field("lift", lift).finish()
            }
            BranchKind::Custom { deriv, .. } => {
                f.debug_struct("Custom").field("has_deriv", &deriv.is_some()).finish()
            }
        }
    }
}

/// One monotone piece of the map.
#[derive(Debug, Clone)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub increasing: bool,
    pub kind: BranchKind,
    /// `[min |Df|, max |Df|]` on the domain when known.
    pub expansion_bounds: Option<(f64, f64)>,
    exact_domain: Option<(Dyadic, Dyadic)>,
}

impl Branch {
    pub fn affine(lo: f64, hi: f64, slope: f64, offset: f64) -> Self {
        Branch {
            lo,
            hi,
            increasing: slope > 0.0,
            kind: BranchKind::Affine { slope, offset, exact: None },
            expansion_bounds: Some((fmath::abs(slope), fmath::abs(slope))),
            exact_domain: None,
        }
    }

    /// Affine branch with exact dyadic bookkeeping; domain is `[lo_num, hi_num] / 2^exp`.
    pub fn dyadic_affine(lo: Dyadic, hi: Dyadic, shift: u32, negative: bool, offset: i64) -> Self {
        let slope = if negative { -1.0 } else { 1.0 } * fmath::powi(2.0, shift as i32);
        Branch {
            lo: lo.to_f64(),
            hi: hi.to_f64(),
            increasing: !negative,
            kind: BranchKind::Affine {
                slope,
                offset: offset as f64,
                exact: Some(DyadicAffine { shift, negative, offset }),
            },
            expansion_bounds: Some((fmath::abs(slope), fmath::abs(slope))),
            exact_domain: Some((lo, hi)),
        }
    }

    pub fn custom(lo: f64, hi: f64, increasing: bool, eval: RealFn, deriv: Option<RealFn>) -> Self {
        Branch {
            lo,
            hi,
            increasing,
            kind: BranchKind::Custom { eval, deriv },
            expansion_bounds: None,
            exact_domain: None,
        }
    }

    /// Continuous extension of the branch to its closed domain.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine { slope, offset, .. } => slope * x + offset,
            BranchKind::Intermittent { alpha, lift } => x + fmath::powf(x, 1.0 + alpha) - lift,
            BranchKind::Custom { eval, .. } => eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> Option<f64> {
        match &self.kind {
            BranchKind::Affine { slope, .. } => Some(*slope),
            BranchKind::Intermittent { alpha, .. } => Some(1.0 + (1.0 + alpha) * fmath::powf(x, *alpha)),
            BranchKind::Custom { deriv, .. } => deriv.as_ref().map(|d| d(x)),
        }
    }

    /// `(slope, offset)` when the branch is affine.
    pub fn affine_coefficients(&self) -> Option<(f64, f64)> {
        match &self.kind {
            BranchKind::Affine { slope, offset, .. } => Some((*slope, *offset)),
            _ => None,
        }
    }

    fn exact(&self) -> Option<DyadicAffine> {
        match &self.kind {
            BranchKind::Affine { exact, .. } => *exact,
            _ => None,
        }
    }

    fn lo_pt(&self) -> Pt {
        match self.exact_domain {
            Some((lo, _)) => Pt::exact(lo),
            None => Pt::float(self.lo),
        }
    }

    fn hi_pt(&self) -> Pt {
        match self.exact_domain {
            Some((_, hi)) => Pt::exact(hi),
            None => Pt::float(self.hi),
        }
    }

    fn apply(&self, p: Pt) -> Pt {
        if let (Some(e), Some(d)) = (self.exact(), p.d) {
            let v = d.scale_pow2(e.shift, e.negative).add(Dyadic::integer(e.offset));
            return Pt::exact(v);
        }
        Pt::float(self.eval(p.x))
    }

    fn apply_inverse(&self, p: Pt) -> Pt {
        if let (Some(e), Some(d)) = (self.exact(), p.d) {
            if let Some(v) = d.sub(Dyadic::integer(e.offset)).div_pow2(e.shift, e.negative) {
                return Pt::exact(v);
            }
        }
        Pt::float(self.inverse(p.x))
    }

    /// Endpoints of the branch domain, exact when available.
    pub fn domain_values(&self) -> (IntervalValue, IntervalValue) {
        (self.lo_pt().value(), self.hi_pt().value())
    }

    /// Image of a point, exact when both the branch and the point are dyadic.
    pub fn apply_value(&self, v: IntervalValue) -> IntervalValue {
        self.apply(pt_of(v)).value()
    }

    /// Preimage of `y` inside the branch domain (clamped to the domain).
    pub fn inverse(&self, y: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine { slope, offset, .. } => ((y - offset) / slope).clamp(self.lo, self.hi),
            BranchKind::Intermittent { alpha, lift } => {
                let target = y + lift;
                let mut x = target.clamp(self.lo, self.hi);
                for _ in 0..200 {
                    let g = x + fmath::powf(x, 1.0 + alpha) - target;
                    let dg = 1.0 + (1.0 + alpha) * fmath::powf(x, *alpha);
                    let step = g / dg;
                    let next = (x - step).clamp(self.lo, self.hi);
                    if fmath::abs(next - x) <= 4e-16 * x.max(1e-300) {
                        x = next;
                        break;
                    }
                    x = next;
                }
                x
            }
            BranchKind::Custom { .. } => {
                let (mut a, mut b) = (self.lo, self.hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m == a || m == b {
                        break;
                    }
                    let below = self.eval(m) < y;
                    if below == self.increasing {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
        }
    }
}

/// A piecewise-monotone map of `[0, 1]` (or the circle).
#[derive(Debug, Clone)]
pub struct PiecewiseMonotoneMap {
    branches: Vec<Branch>,
    circle: bool,
    critical_orders: Vec<(f64, f64)>,
    tol: f64,
    mixing_asserted: bool,
    name: String,
}

/// Itinerary-labeled interval of `P_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub word: Vec<u8>,
    pub interval: Interval,
    pub depth: usize,
}

/// All cylinders of one depth, ordered by position.
#[derive(Debug, Clone)]
pub struct PartitionLevel {
    pub depth: usize,
    pub cylinders: Vec<Cylinder>,
}

/// Fixed point of `f^n` together with the cylinder containing it.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPoint {
    pub word: Vec<u8>,
    pub x: f64,
}

/// View of a cylinder during depth-first refinement.
pub struct CylinderView<'a> {
    pub word: &'a [u8],
    pub interval: Interval,
    /// Closed hull of `f^n(C)`.
    pub image: (f64, f64),
    /// Orientation of `f^n` on the cylinder.
    pub increasing: bool,
}

#[derive(Clone)]
struct Frame {
    lo: Pt,
    hi: Pt,
    img_lo: Pt,
    img_hi: Pt,
    increasing: bool,
}

impl PiecewiseMonotoneMap {
    /// Validates and builds a map from an ordered branch list.
    pub fn new(branches: Vec<Branch>, circle: bool, name: impl Into<String>) -> Result<Self> {
        let map = PiecewiseMonotoneMap {
            branches,
            circle,
            critical_orders: Vec::new(),
            tol: DEFAULT_TOL,
            mixing_asserted: false,
            name: name.into(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        self.tol = tol;
        Ok(self)
    }

    /// Records critical points with their orders; infinite or non-positive orders are flat and rejected.
    pub fn with_critical_orders(mut self, orders: Vec<(f64, f64)>) -> Result<Self> {
        for &(c, l) in &orders {
            if !(l.is_finite() && l >= 1.0) {
                return Err(Error::MalformedMap(format!("flat critical point at {c} (order {l})")));
            }
        }
        self.critical_orders = orders;
        Ok(self)
    }

    /// Records the user's assertion that the map is topologically mixing (not verified).
    pub fn assert_mixing(mut self, mixing: bool) -> Self {
        self.mixing_asserted = mixing;
        self
    }

    /// `2x mod 1` with exact dyadic cylinders.
    pub fn doubling() -> Self {
        Self::full_linear(2).expect("doubling map is valid")
    }

    /// `kx mod 1`; exact when `k` is a power of two.
    pub fn full_linear(k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParameter("full_linear needs k >= 1".into()));
        }
        let mut branches = Vec::with_capacity(k as usize);
        let pow2 = k.is_power_of_two();
        let shift = k.trailing_zeros();
        for i in 0..k {
            let b = if pow2 {
                Branch::dyadic_affine(
                    Dyadic::new(i as i128, shift),
                    Dyadic::new(i as i128 + 1, shift),
                    shift,
                    false,
                    -(i as i64),
                )
            } else {
                Branch::affine(i as f64 / k as f64, (i + 1) as f64 / k as f64, k as f64, -(i as f64))
            };
            branches.push(b);
        }
        let name = if k == 2 { String::from("doubling") } else { format!("full_linear({k})") };
        let map = Self::new(branches, true, name)?;
        Ok(map.assert_mixing(k >= 2))
    }

    /// Manneville-Pomeau map `x + x^(1+alpha) mod 1`.
    pub fn manneville_pomeau(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
        }
        let split = numeric::bisect(|x| x + fmath::powf(x, 1.0 + alpha) - 1.0, 0.0, 1.0, 1e-16, 200)?;
        let left = Branch {
            lo: 0.0,
            hi: split,
            increasing: true,
            kind: BranchKind::Intermittent { alpha, lift: 0.0 },
            expansion_bounds: Some((1.0, 1.0 + (1.0 + alpha) * fmath::powf(split, alpha))),
            exact_domain: None,
        };
        let right = Branch {
            lo: split,
            hi: 1.0,
            increasing: true,
            kind: BranchKind::Intermittent { alpha, lift: 1.0 },
            expansion_bounds: Some((1.0 + (1.0 + alpha) * fmath::powf(split, alpha), 2.0 + alpha)),
            exact_domain: None,
        };
        let map = Self::new(vec![left, right], true, format!("manneville_pomeau({alpha})"))?;
        Ok(map.assert_mixing(true))
    }

    /// Continuous piecewise-linear map with `f(0) = start` and the given slopes.
    pub fn piecewise_linear(breakpoints: &[f64], slopes: &[f64], start: Option<f64>) -> Result<Self> {
        if breakpoints.len() != slopes.len() + 1 || slopes.is_empty() {
            return Err(Error::MalformedMap("need one more breakpoint than slopes".into()));
        }
        let mut value = start.unwrap_or(if slopes[0] > 0.0 { 0.0 } else { 1.0 });
        let mut branches = Vec::with_capacity(slopes.len());
        let mut turning = Vec::new();
        for (i, &s) in slopes.iter().enumerate() {
            let (a, b) = (breakpoints[i], breakpoints[i + 1]);
            if s == 0.0 {
                return Err(Error::MalformedMap(format!("flat branch on [{a}, {b}]")));
            }
            branches.push(Branch::affine(a, b, s, value - s * a));
            if i > 0 && (slopes[i - 1] > 0.0) != (s > 0.0) {
                turning.push((a, 1.0));
            }
            value += s * (b - a);
        }
        let map = Self::new(branches, false, "piecewise_linear")?;
        map.with_critical_orders(turning)
    }

    fn validate(&self) -> Result<()> {
        let bs = &self.branches;
        if bs.is_empty() {
            return Err(Error::MalformedMap("no branches".into()));
        }
        if bs.len() > 255 {
            return Err(Error::MalformedMap("at most 255 branches are supported".into()));
        }
        let tol = 1e-12;
        if fmath::abs(bs[0].lo) > tol || fmath::abs(bs[bs.len() - 1].hi - 1.0) > tol {
            return Err(Error::MalformedMap("branches must cover [0, 1]".into()));
        }
        for (i, b) in bs.iter().enumerate() {
            if !(b.hi > b.lo) {
                return Err(Error::MalformedMap(format!("branch {i} has empty domain")));
            }
            if i + 1 < bs.len() && fmath::abs(b.hi - bs[i + 1].lo) > tol {
                return Err(Error::MalformedMap(format!(
                    "branches {i} and {} do not share an endpoint",
                    i + 1
                )));
            }
            let samples = 16;
            let mut prev = b.eval(b.lo);
            for k in 1..=samples {
                let x = b.lo + (b.hi - b.lo) * k as f64 / samples as f64;
                let y = b.eval(x);
                if !y.is_finite() {
                    return Err(Error::MalformedMap(format!("branch {i} is not finite at {x}")));
                }
                if (y > prev) != b.increasing || y == prev {
                    return Err(Error::MalformedMap(format!("branch {i} is not strictly monotone")));
                }
                prev = y;
            }
            let (y0, y1) = (b.eval(b.lo), b.eval(b.hi));
            if y0.min(y1) < -tol || y0.max(y1) > 1.0 + tol {
                return Err(Error::MalformedMap(format!("branch {i} leaves [0, 1]")));
            }
            if let Some(d) = b.deriv(0.5 * (b.lo + b.hi)) {
                if d == 0.0 {
                    return Err(Error::MalformedMap(format!("branch {i} has a flat point")));
                }
            }
        }
        Ok(())
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn is_circle(&self) -> bool {
        self.circle
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn critical_orders(&self) -> &[(f64, f64)] {
        &self.critical_orders
    }

    pub fn mixing_asserted(&self) -> bool {
        self.mixing_asserted
    }

    /// True when every branch keeps exact dyadic endpoints.
    pub fn is_dyadic_exact(&self) -> bool {
        self.branches.iter().all(|b| b.exact().is_some() && b.exact_domain.is_some())
    }

    /// True when some branch derivative vanishes (or a turning point is declared).
    pub fn has_critical_points(&self) -> bool {
        if !self.critical_orders.is_empty() {
            return self.critical_orders.iter().any(|&(_, l)| l > 1.0);
        }
        self.branches.iter().any(|b| {
            [b.lo, b.hi].iter().any(|&x| matches!(b.deriv(x), Some(d) if d == 0.0))
        })
    }

    /// Index of the branch containing `x` under the half-open convention.
    pub fn branch_index(&self, x: f64) -> usize {
        let last = self.branches.len() - 1;
        self.branches.iter().position(|b| x < b.hi).unwrap_or(last).min(last)
    }

    /// `f(x)` using the half-open branch convention.
    pub fn apply(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].eval(x)
    }

    /// `f^n(x)`.
    pub fn iterate(&self, x: f64, n: usize) -> f64 {
        (0..n).fold(x, |y, _| self.apply(y))
    }

    /// `|Df(x)|` when the branch provides a derivative.
    pub fn abs_deriv(&self, x: f64) -> Option<f64> {
        self.branches[self.branch_index(x)].deriv(x).map(fmath::abs)
    }

    /// Follows a word from `x`, returning the orbit `x, f x, ..., f^len x`.
    pub fn orbit_along(&self, word: &[u8], x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(word.len() + 1);
        let mut y = x;
        out.push(y);
        for &w in word {
            y = self.branches[w as usize].eval(y);
            out.push(y);
        }
        out
    }

    /// `P_1`: one cylinder per branch.
    pub fn branch_partition(&self) -> Result<PartitionLevel> {
        self.refine(1)
    }

    /// `P_n`, ordered by position.
    pub fn refine(&self, n: usize) -> Result<PartitionLevel> {
        if n == 0 {
            return Err(Error::InvalidParameter("refinement depth must be at least 1".into()));
        }
        let mut cylinders = Vec::new();
        self.for_each_cylinder(n, &[], |c| {
            cylinders.push(Cylinder { word: c.word.to_vec(), interval: c.interval, depth: n });
        })?;
        Ok(PartitionLevel { depth: n, cylinders })
    }

    /// `laps(f^n)`.
    pub fn lap_number(&self, n: usize) -> Result<u64> {
        Ok(self.lap_numbers(n)?[n - 1])
    }

    /// `laps(f^k)` for `k = 1..=n` in one traversal.
    pub fn lap_numbers(&self, n: usize) -> Result<Vec<u64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("depth must be at least 1".into()));
        }
        let mut counts = vec![0u64; n];
        self.walk(n, &[], &mut |depth, _w, _f| {
            counts[depth - 1] += 1;
        })?;
        Ok(counts)
    }

    /// Visits every depth-`n` cylinder whose word starts with `prefix`, in positional order.
    pub fn for_each_cylinder<F: FnMut(&CylinderView<'_>)>(&self, n: usize, prefix: &[u8], mut visit: F) -> Result<()> {
        let last_hi = Pt::float(1.0);
        self.walk(n, prefix, &mut |depth, word, fr| {
            if depth == n {
                let closed = !fr.hi.less(&last_hi) || fr.hi.x >= 1.0;
                let interval = Interval { lo: fr.lo.value(), hi: fr.hi.value(), closed_hi: closed };
                visit(&CylinderView {
                    word,
                    interval,
                    image: (fr.img_lo.x, fr.img_hi.x),
                    increasing: fr.increasing,
                });
            }
        })
    }

    /// The cylinder with itinerary `word` as `(lo, hi, closed_hi)`.
    pub fn cylinder_for_word(&self, word: &[u8]) -> Result<(f64, f64, bool)> {
        if word.iter().any(|&b| b as usize >= self.branches.len()) {
            return Err(Error::InvalidParameter(format!("word {word:?} uses a branch the map does not have")));
        }
        if word.is_empty() {
            return Ok((0.0, 1.0, true));
        }
        let mut found = None;
        self.for_each_cylinder(word.len(), word, |c| {
            found = Some((c.interval.lo(), c.interval.hi(), c.interval.closed_hi));
        })?;
        found.ok_or_else(|| Error::InvalidParameter(format!("word {word:?} is not admissible")))
    }

    /// Depth-first refinement; calls `visit(depth, word, frame)` for every cylinder of depth `1..=n`.
    fn walk<F: FnMut(usize, &[u8], &Frame)>(&self, n: usize, prefix: &[u8], visit: &mut F) -> Result<()> {
        let mut word: Vec<u8> = Vec::with_capacity(n);
        let root = Frame {
            lo: if self.is_dyadic_exact() { Pt::exact(Dyadic::integer(0)) } else { Pt::float(0.0) },
            hi: if self.is_dyadic_exact() { Pt::exact(Dyadic::integer(1)) } else { Pt::float(1.0) },
            img_lo: if self.is_dyadic_exact() { Pt::exact(Dyadic::integer(0)) } else { Pt::float(0.0) },
            img_hi: if self.is_dyadic_exact() { Pt::exact(Dyadic::integer(1)) } else { Pt::float(1.0) },
            increasing: true,
        };
        self.walk_rec(n, prefix, &root, &mut word, visit)
    }

    fn walk_rec<F: FnMut(usize, &[u8], &Frame)>(
        &self,
        n: usize,
        prefix: &[u8],
        frame: &Frame,
        word: &mut Vec<u8>,
        visit: &mut F,
    ) -> Result<()> {
        let depth = word.len();
        if depth == n {
            return Ok(());
        }
        let choices: Vec<usize> = match prefix.get(depth) {
            Some(&b) => vec![b as usize],
            None => (0..self.branches.len()).collect(),
        };
        // Children are emitted left to right in x; reversing orientation flips branch order.
        let ordered: Vec<usize> = if frame.increasing { choices } else { choices.into_iter().rev().collect() };
        for bi in ordered {
            let Some(child) = self.child(frame, word, bi)? else { continue };
            word.push(bi as u8);
            visit(depth + 1, word, &child);
            self.walk_rec(n, prefix, &child, word, visit)?;
            word.pop();
        }
        Ok(())
    }

    /// Restricts a frame to the part whose current image lies in branch `bi`.
    fn child(&self, frame: &Frame, word: &[u8], bi: usize) -> Result<Option<Frame>> {
        let b = &self.branches[bi];
        let sub_lo = frame.img_lo.max(b.lo_pt());
        let sub_hi = frame.img_hi.min(b.hi_pt());
        let overlap = match (sub_lo.d, sub_hi.d) {
            (Some(a), Some(c)) => {
                if a >= c {
                    return Ok(None);
                }
                sub_hi.x - sub_lo.x
            }
            _ => sub_hi.x - sub_lo.x,
        };
        if !(overlap > self.tol) && !(sub_lo.d.is_some() && sub_hi.d.is_some()) {
            return Ok(None);
        }
        // Pull the sub-image back to the cylinder, reusing shared endpoints exactly.
        let pull = |y: Pt, same_as_lo: bool, same_as_hi: bool| -> Pt {
            let at_img_lo = same_as_lo;
            let at_img_hi = same_as_hi;
            if at_img_lo {
                return if frame.increasing { frame.lo } else { frame.hi };
            }
            if at_img_hi {
                return if frame.increasing { frame.hi } else { frame.lo };
            }
            let mut p = y;
            for &w in word.iter().rev() {
                p = self.branches[w as usize].apply_inverse(p);
            }
            p
        };
        let lo_is_img_lo = !frame.img_lo.less(&sub_lo);
        let hi_is_img_hi = !sub_hi.less(&frame.img_hi);
        let a = pull(sub_lo, lo_is_img_lo, false);
        let c = pull(sub_hi, false, hi_is_img_hi);
        let (lo, hi) = if frame.increasing { (a, c) } else { (c, a) };
        let width = hi.x - lo.x;
        let exact = lo.d.is_some() && hi.d.is_some();
        if !exact && !(width > self.tol) {
            return Err(Error::ResolutionLimit { depth: word.len() + 1, width });
        }
        let fa = b.apply(sub_lo);
        let fc = b.apply(sub_hi);
        let (img_lo, img_hi) = if b.increasing { (fa, fc) } else { (fc, fa) };
        Ok(Some(Frame { lo, hi, img_lo, img_hi, increasing: frame.increasing == b.increasing }))
    }

    /// Upper entropy bound `inf (1/n) log laps(f^n)` with a periodic-orbit lower bound.
    pub fn topological_entropy(&self, n_max: usize) -> Result<PressureEstimate> {
        if n_max < 2 {
            return Err(Error::InvalidParameter("n_max must be at least 2".into()));
        }
        let laps = self.lap_numbers(n_max)?;
        let logs: Vec<f64> = laps.iter().map(|&l| fmath::ln(l as f64)).collect();
        let ns: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
        let diagnostics: Vec<f64> = logs.iter().zip(&ns).map(|(l, n)| l / n).collect();
        let upper = diagnostics.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut lower: f64 = 0.0;
        let periodic_depth = n_max.min(12);
        for n in 1..=periodic_depth {
            let count = self.periodic_points(n)?.len();
            if count > 0 {
                lower = lower.max(fmath::ln(count as f64) / n as f64);
            }
        }
        let lower = lower.min(upper);
        let fit = numeric::window_rate(&ns, &logs);
        let value = fit.map(|f| f.slope).unwrap_or(upper).clamp(lower, upper);
        Ok(PressureEstimate::new(value, lower, upper, (1, n_max), diagnostics))
    }

    /// Fixed points of `f^n`, at most one per `n`-cylinder.
    pub fn periodic_points(&self, n: usize) -> Result<Vec<PeriodicPoint>> {
        self.periodic_points_within(n, &[])
    }

    /// Fixed points of `f^n` inside cylinders starting with `prefix`.
    pub fn periodic_points_within(&self, n: usize, prefix: &[u8]) -> Result<Vec<PeriodicPoint>> {
        if n == 0 {
            return Err(Error::InvalidParameter("period must be at least 1".into()));
        }
        let mut out: Vec<PeriodicPoint> = Vec::new();
        let mut failure: Option<Error> = None;
        let tol = self.tol;
        self.for_each_cylinder(n, prefix, |c| {
            if failure.is_some() {
                return;
            }
            let (lo, hi) = (c.interval.lo(), c.interval.hi());
            if c.image.0 > lo + tol || c.image.1 < hi - tol {
                return;
            }
            match self.fixed_point_on(c.word, lo, hi, c.increasing) {
                Ok(Some(mut x)) => {
                    if x > hi - tol * 0.5 && !c.interval.closed_hi && x < hi + tol {
                        return;
                    }
                    if x < lo - tol || x > hi + tol {
                        return;
                    }
                    if self.circle && x >= 1.0 - tol {
                        x = 0.0;
                    }
                    x = x.clamp(lo.min(x), hi.max(x));
                    out.push(PeriodicPoint { word: c.word.to_vec(), x });
                }
                Ok(None) => {}
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        out.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(Ordering::Equal));
        out.dedup_by(|a, b| fmath::abs(a.x - b.x) <= tol);
        Ok(out)
    }

    fn fixed_point_on(&self, word: &[u8], lo: f64, hi: f64, increasing: bool) -> Result<Option<f64>> {
        let affine: Option<(f64, f64)> = word.iter().try_fold((1.0, 0.0), |(a, c), &w| {
            self.branches[w as usize].affine_coefficients().map(|(s, o)| (s * a, s * c + o))
        });
        if let Some((a, c)) = affine {
            if a == 1.0 {
                return Ok(None);
            }
            return Ok(Some(c / (1.0 - a)));
        }
        let g = |x: f64| self.orbit_along(word, x)[word.len()] - x;
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            return Ok(Some(lo));
        }
        if ghi == 0.0 {
            return Ok(Some(hi));
        }
        if (glo > 0.0) == (ghi > 0.0) {
            // Image covers the cylinder only up to tolerance: accept the closer endpoint.
            let x = if fmath::abs(glo) < fmath::abs(ghi) { lo } else { hi };
            return Ok((fmath::abs(g(x)) <= 10.0 * self.tol).then_some(x));
        }
        let _ = increasing;
        let x = numeric::bisect(g, lo, hi, self.tol * 1e-3, 400)
            .map_err(|_| Error::NoConvergence(format!("fixed point search on word {word:?}")))?;
        Ok(Some(x))
    }

    /// The depth-`n` cylinder containing `x`.
    pub fn cylinder_containing(&self, x: f64, n: usize) -> Result<Cylinder> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter(format!("{x} is outside [0, 1]")));
        }
        let mut word = Vec::with_capacity(n);
        let mut y = x;
        for k in 0..n {
            for b in &self.branches[..self.branches.len() - 1] {
                if fmath::abs(y - b.hi) <= self.tol {
                    return Err(Error::Boundary { x, depth: k + 1 });
                }
            }
            let bi = self.branch_index(y);
            word.push(bi as u8);
            y = self.branches[bi].eval(y);
        }
        let mut found = None;
        self.for_each_cylinder(n, &word, |c| {
            if c.word == word.as_slice() {
                found = Some(Cylinder { word: word.clone(), interval: c.interval, depth: n });
            }
        })?;
        found.ok_or(Error::Boundary { x, depth: n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_arithmetic_is_exact() {
        let a = Dyadic::new(3, 2);
        let b = Dyadic::new(1, 1);
        assert_eq!(a.add(b), Dyadic::new(5, 2));
        assert_eq!(a.sub(b), Dyadic::new(1, 2));
        assert_eq!(Dyadic::new(4, 3), Dyadic::new(1, 1));
        assert_eq!(a.scale_pow2(1, false), Dyadic::new(3, 1));
        assert!(Dyadic::new(1, 3) < Dyadic::new(1, 2));
    }

    #[test]
    fn doubling_partition_is_dyadic() {
        let f = PiecewiseMonotoneMap::doubling();
        let p = f.refine(3).unwrap();
        assert_eq!(p.cylinders.len(), 8);
        for (j, c) in p.cylinders.iter().enumerate() {
            assert_eq!(c.interval.lo.as_dyadic(), Some(Dyadic::new(j as i128, 3)));
            assert_eq!(c.interval.hi.as_dyadic(), Some(Dyadic::new(j as i128 + 1, 3)));
            assert_eq!(c.interval.closed_hi, j == 7);
        }
    }

    #[test]
    fn mp_branch_split_solves_preimage_of_one() {
        let f = PiecewiseMonotoneMap::manneville_pomeau(0.3).unwrap();
        let p = f.branch_partition().unwrap();
        assert_eq!(p.cylinders.len(), 2);
        let s = p.cylinders[0].interval.hi();
        assert!((s + fmath::powf(s, 1.3) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cylinder_of_point_three() {
        let f = PiecewiseMonotoneMap::doubling();
        let c = f.cylinder_containing(0.3, 2).unwrap();
        assert_eq!(c.word, vec![0, 1]);
        assert_eq!(c.interval.lo(), 0.25);
        assert_eq!(c.interval.hi(), 0.5);
        assert!(matches!(f.cylinder_containing(0.5, 1), Err(Error::Boundary { .. })));
        assert_eq!(f.cylinder_containing(0.0, 5).unwrap().word, vec![0; 5]);
    }

    #[test]
    fn doubling_periodic_points() {
        let f = PiecewiseMonotoneMap::doubling();
        let p1: Vec<f64> = f.periodic_points(1).unwrap().iter().map(|p| p.x).collect();
        assert_eq!(p1, vec![0.0]);
        let p2: Vec<f64> = f.periodic_points(2).unwrap().iter().map(|p| p.x).collect();
        assert_eq!(p2.len(), 3);
        assert!((p2[1] - 1.0 / 3.0).abs() < 1e-15 && (p2[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn flat_pieces_are_rejected() {
        assert!(PiecewiseMonotoneMap::piecewise_linear(&[0.0, 0.5, 1.0], &[2.0, 0.0], None).is_err());
        let f = PiecewiseMonotoneMap::doubling();
        assert!(f.with_critical_orders(vec![(0.5, f64::INFINITY)]).is_err());
    }

    #[test]
    fn malformed_cover_is_rejected() {
        let b = vec![Branch::affine(0.0, 0.4, 2.0, 0.0), Branch::affine(0.5, 1.0, 2.0, -1.0)];
        assert!(matches!(PiecewiseMonotoneMap::new(b, false, "gap"), Err(Error::MalformedMap(_))));
    }

    #[test]
    fn float_refinement_hits_resolution_limit() {
        let f = PiecewiseMonotoneMap::full_linear(3).unwrap();
        assert!(matches!(f.refine(30), Err(Error::ResolutionLimit { .. })));
    }
}
