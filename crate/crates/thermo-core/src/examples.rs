//! Closed-form engines for the step-potential family on the doubling map and for the
//! Manneville-Pomeau family.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::fmath;
use crate::gibbs::{solve_equilibrium, EquilibriumOptions, EquilibriumResult, Projectability};
use crate::inducing::{
    z0, InducedPotential, InducingScheme, SchemeBranch, TailModel, TailShape, TailSum, Z0Report,
};
use crate::interval_map::PiecewiseMonotoneMap;
use crate::numeric::{self, Enclosure, LineFit};
use crate::potential::{Potential, Span};

/// Default truncation for the doubling scheme on `(1/2, 1]`.
pub const HK_HORIZON: usize = 48;

/// `phi = a_k` on `(2^{-k-1}, 2^{-k}]` with `a_k = b` below the switch index and
/// `a_k = gamma log((k+1)/(k+2))` from it on. `gamma = 2` is the Hofbauer-Keller family;
/// `switch = None` is the two-valued limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFamily {
    pub b: f64,
    pub switch: Option<usize>,
    pub gamma: f64,
}

impl StepFamily {
    pub fn new(b: f64, switch: Option<usize>, gamma: f64) -> Result<Self> {
        if !(b < 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("need finite b < 0, got {b}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("need gamma >= 0, got {gamma}")));
        }
        if switch.is_some_and(|k| k > 900) {
            return Err(Error::InvalidParameter("switch index must be at most 900".into()));
        }
        Ok(StepFamily { b, switch, gamma })
    }

    pub fn hk(b: f64, k: usize) -> Result<Self> {
        Self::new(b, Some(k), 2.0)
    }

    pub fn two_valued(b: f64) -> Result<Self> {
        Self::new(b, None, 2.0)
    }

    pub fn with_b(&self, b: f64) -> Result<Self> {
        Self::new(b, self.switch, self.gamma)
    }

    pub fn a(&self, k: usize) -> f64 {
        match self.switch {
            Some(sw) if k >= sw => self.gamma * fmath::ln((k as f64 + 1.0) / (k as f64 + 2.0)),
            _ => self.b,
        }
    }

    /// `s_n = a_0 + ... + a_{n-1}` in closed form.
    pub fn s(&self, n: usize) -> f64 {
        match self.switch {
            Some(k) if n > k => k as f64 * self.b + self.gamma * fmath::ln((k as f64 + 1.0) / (n as f64 + 1.0)),
            _ => n as f64 * self.b,
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        match self.switch {
            Some(k) => Potential::step_family(self.b, k, self.gamma),
            None => Ok(Potential::two_valued(self.b)),
        }
    }

    /// `e^{s_n}` for `n > start`; needs `start >= switch`.
    pub fn tail_model(&self, start: usize) -> Result<TailModel> {
        match self.switch {
            Some(k) => {
                if start < k {
                    return Err(Error::InvalidParameter(format!("truncation {start} lies below the switch index {k}")));
                }
                let c = fmath::exp(k as f64 * self.b + self.gamma * fmath::ln(k as f64 + 1.0));
                Ok(TailModel::Closed { start, coeff_lo: c, coeff_hi: c, rate: 0.0, exponent: self.gamma, offset: 1.0 })
            }
            None => Ok(TailModel::Closed { start, coeff_lo: 1.0, coeff_hi: 1.0, rate: self.b, exponent: 0.0, offset: 0.0 }),
        }
    }

    /// The induced potential on the doubling scheme, `Phi|_{X_n} = s_n`, with its closed tail.
    pub fn induced(&self, horizon: usize) -> Result<InducedPotential> {
        let scheme = InducingScheme::doubling_half(horizon)?;
        let values: Vec<f64> = (1..=horizon).map(|n| self.s(n)).collect();
        InducedPotential::from_ranges(&scheme, &self.potential()?, values.clone(), values, self.tail_model(horizon)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesReport {
    /// `sum_{n>=1} e^{s_n}`.
    pub value: Enclosure,
    pub finite_part: f64,
    pub truncation: usize,
    pub tail: TailSum,
    /// `e^b (1 - e^{bK})/(1 - e^b) + e^{bK}(K+1)`, for the `gamma = 2` family.
    pub closed_bound: Option<f64>,
    pub bound_holds: bool,
}

/// `sum_n e^{s_n}` with an exact finite part and a closed-form tail.
pub fn hk_series(family: &StepFamily, n_trunc: usize) -> Result<SeriesReport> {
    let n = n_trunc.max(family.switch.unwrap_or(0)).max(1);
    let finite_part: f64 = (1..=n).map(|k| fmath::exp(family.s(k))).sum();
    let tail = family.tail_model(n)?.sum(false);
    let value = if tail.divergent {
        Enclosure::new(f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        Enclosure::new(finite_part + tail.lower, finite_part + tail.value, finite_part + tail.upper)
    };
    let closed_bound = match family.switch {
        Some(k) if family.gamma == 2.0 => {
            let eb = fmath::exp(family.b);
            let ebk = fmath::exp(family.b * k as f64);
            Some(eb * (1.0 - ebk) / (1.0 - eb) + ebk * (k as f64 + 1.0))
        }
        _ => None,
    };
    let bound_holds = closed_bound.is_none_or(|bd| value.upper <= bd);
    Ok(SeriesReport { value, finite_part, truncation: n, tail, closed_bound, bound_holds })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalParameter {
    pub b: f64,
    /// `sum e^{s_n} - 1` at the root.
    pub residual: f64,
    pub below_log2: bool,
}

/// The `b` where `sum_n e^{s_n} = 1`, by bisection (the series increases with `b`).
pub fn critical_b(switch: Option<usize>, gamma: f64, tol: f64) -> Result<CriticalParameter> {
    let series = |b: f64| -> f64 {
        StepFamily::new(b, switch, gamma)
            .and_then(|f| hk_series(&f, switch.unwrap_or(0).max(64)))
            .map(|r| r.value.value - 1.0)
            .unwrap_or(f64::NAN)
    };
    let hi = -core::f64::consts::LN_2 + 1e-12;
    let b = numeric::bisect(series, -60.0, hi, tol, 400)?;
    Ok(CriticalParameter { b, residual: series(b), below_log2: b < -core::f64::consts::LN_2 })
}

/// `b_K` for the Hofbauer-Keller family.
pub fn hk_critical_b(k: usize, tol: f64) -> Result<CriticalParameter> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
    }
    critical_b(Some(k), 2.0, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesComparison {
    Below,
    Equal,
    Above,
}

/// The five regions of the phase table, top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseRegion {
    /// `sum e^{s_k} > 1`, `sum a_k` finite.
    AboveSummable,
    /// `sum e^{s_k} > 1`, `sum a_k` infinite.
    AboveDivergent,
    /// `sum e^{s_k} = 1`, `sum (k+1) e^{s_k}` finite.
    CriticalFiniteMean,
    /// `sum e^{s_k} = 1`, `sum (k+1) e^{s_k}` infinite.
    CriticalInfiniteMean,
    /// `sum e^{s_k} < 1`.
    Below,
}

impl PhaseRegion {
    /// `(P > 0, Gibbs, unique equilibrium)` as tabulated.
    pub fn table_row(&self) -> (bool, bool, bool) {
        match self {
            PhaseRegion::AboveSummable => (true, true, true),
            PhaseRegion::AboveDivergent => (true, false, true),
            PhaseRegion::CriticalFiniteMean => (false, false, false),
            PhaseRegion::CriticalInfiniteMean => (false, false, true),
            PhaseRegion::Below => (false, false, true),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhaseRegion::AboveSummable => "above_summable",
            PhaseRegion::AboveDivergent => "above_divergent",
            PhaseRegion::CriticalFiniteMean => "critical_finite_mean",
            PhaseRegion::CriticalInfiniteMean => "critical_infinite_mean",
            PhaseRegion::Below => "below",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub series: Enclosure,
    pub comparison: SeriesComparison,
    pub sum_a_finite: bool,
    /// `sum (k+1) e^{s_k}`.
    pub weighted_series: TailSum,
    pub region: PhaseRegion,
    pub pressure_positive: bool,
    pub gibbs: bool,
    pub unique: bool,
    /// The equilibrium state is reachable from the scheme on `(1/2, 1]`.
    pub accessible: bool,
    /// The series is within tolerance of 1.
    pub boundary: bool,
}

/// Reads the phase-table row off the three series.
pub fn hk_phase(family: &StepFamily) -> Result<PhaseRow> {
    const EQUAL_TOL: f64 = 1e-8;
    let series = hk_series(family, 200)?.value;
    let boundary = fmath::abs(series.value - 1.0) <= EQUAL_TOL || (series.lower <= 1.0 && 1.0 <= series.upper);
    let comparison = if boundary {
        SeriesComparison::Equal
    } else if series.value > 1.0 {
        SeriesComparison::Above
    } else {
        SeriesComparison::Below
    };
    let sum_a_finite = family.switch.is_some() && family.gamma == 0.0;
    let n = family.switch.unwrap_or(0).max(200);
    let finite: f64 = (1..=n).map(|k| (k as f64 + 1.0) * fmath::exp(family.s(k))).sum();
    let t = family.tail_model(n)?;
    let weighted_tail = t.sum(true);
    let plain_tail = t.sum(false);
    let weighted_series = if weighted_tail.divergent {
        TailSum::divergent()
    } else {
        TailSum {
            lower: finite + weighted_tail.lower + plain_tail.lower,
            value: finite + weighted_tail.value + plain_tail.value,
            upper: finite + weighted_tail.upper + plain_tail.upper,
            divergent: false,
        }
    };
    let region = match comparison {
        SeriesComparison::Above if sum_a_finite => PhaseRegion::AboveSummable,
        SeriesComparison::Above => PhaseRegion::AboveDivergent,
        SeriesComparison::Equal if weighted_series.is_bounded() => PhaseRegion::CriticalFiniteMean,
        SeriesComparison::Equal => PhaseRegion::CriticalInfiniteMean,
        SeriesComparison::Below => PhaseRegion::Below,
    };
    let (pressure_positive, gibbs, unique) = region.table_row();
    Ok(PhaseRow {
        series,
        comparison,
        sum_a_finite,
        weighted_series,
        region,
        pressure_positive,
        gibbs,
        unique,
        accessible: pressure_positive,
        boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScan {
    pub critical: CriticalParameter,
    /// `(b, row)` along the grid.
    pub rows: Vec<(f64, PhaseRow)>,
    /// Grid cells `(b_lo, b_hi)` where the region changes.
    pub boundaries: Vec<(f64, f64)>,
}

pub fn hk_phase_scan(k: usize, b_grid: &[f64]) -> Result<PhaseScan> {
    let critical = hk_critical_b(k, 1e-14)?;
    let mut rows = Vec::with_capacity(b_grid.len());
    for &b in b_grid {
        rows.push((b, hk_phase(&StepFamily::hk(b, k)?)?));
    }
    let boundaries = rows.windows(2).filter(|w| w[0].1.region != w[1].1.region).map(|w| (w[0].0, w[1].0)).collect();
    Ok(PhaseScan { critical, rows, boundaries })
}

/// The periodic orbit `p_n^k = 2^{n-k}/(2^n - 1)`, `k = 1..n`, of the doubling map.
#[derive(Debug, Clone, PartialEq)]
pub struct HkCycle {
    pub points: Vec<Ratio<i128>>,
    /// `f(p^k) = p^{k-1}` and `f(p^1) = p^n` hold exactly.
    pub closes: bool,
    /// Birkhoff sum from exact piece indices.
    pub exact_sum: f64,
    /// Birkhoff sum from evaluating the potential at the rounded points.
    pub float_sum: f64,
}

fn exact_doubling(x: Ratio<i128>) -> Ratio<i128> {
    let two = Ratio::from_integer(2);
    let one = Ratio::from_integer(1);
    if x * two > one {
        x * two - one
    } else {
        x * two
    }
}

/// Index `k` with `x ∈ (2^{-k-1}, 2^{-k}]`.
fn dyadic_shell(x: Ratio<i128>) -> usize {
    let mut k = 0;
    let mut upper = Ratio::from_integer(1i128);
    while x <= upper / 2 {
        upper /= 2;
        k += 1;
    }
    k
}

pub fn hk_cycle(family: &StepFamily, n: usize) -> Result<HkCycle> {
    if n == 0 || n > 120 {
        return Err(Error::InvalidParameter(format!("cycle length must be in 1..=120, got {n}")));
    }
    let denom = (1i128 << n) - 1;
    let points: Vec<Ratio<i128>> = (1..=n).map(|k| Ratio::new(1i128 << (n - k), denom)).collect();
    let closes = (0..n).all(|i| exact_doubling(points[i]) == points[(i + n - 1) % n]);
    let exact_sum = points.iter().map(|p| family.a(dyadic_shell(*p))).sum();
    let phi = family.potential()?;
    let float_sum = points.iter().map(|p| phi.eval(*p.numer() as f64 / *p.denom() as f64)).sum();
    Ok(HkCycle { points, closes, exact_sum, float_sum })
}

/// `y_0 = 1` and `y_n` the left-branch preimage of `y_{n-1}` under `x + x^{1+alpha}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpOrbit {
    pub alpha: f64,
    pub y: Vec<f64>,
    /// Largest `|f(y_{n+1}) - y_n| / y_n`.
    pub max_residual: f64,
}

impl MpOrbit {
    pub fn u(&self, n: usize) -> f64 {
        fmath::powf(self.y[n], -self.alpha)
    }

    /// `u_n - alpha n - (alpha (alpha + 1) / 2) log n`.
    pub fn asymptotic_residual(&self, n: usize) -> f64 {
        let a = self.alpha;
        self.u(n) - a * n as f64 - 0.5 * a * (a + 1.0) * fmath::ln(n as f64)
    }

    pub fn len(&self) -> usize {
        self.y.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.y.len() <= 1
    }
}

pub fn mp_backward_orbit(alpha: f64, n: usize) -> Result<MpOrbit> {
    let map = PiecewiseMonotoneMap::manneville_pomeau(alpha)?;
    let left = &map.branches()[0];
    let mut y = Vec::with_capacity(n + 1);
    y.push(1.0);
    let mut max_residual: f64 = 0.0;
    for k in 1..=n {
        let prev = y[k - 1];
        let next = left.inverse(prev);
        if !(next > 0.0 && next < prev) {
            return Err(Error::NoConvergence(format!("backward orbit stalled at step {k}")));
        }
        let r = fmath::abs(next + fmath::powf(next, 1.0 + alpha) - prev) / prev;
        max_residual = max_residual.max(r);
        y.push(next);
    }
    Ok(MpOrbit { alpha, y, max_residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub lower_spread: f64,
    pub upper_spread: f64,
    /// Upper-half spread at most twice the lower-half spread.
    pub bounded: bool,
}

/// Spread (max - min) of the asymptotic residual on the two halves of `[n_lo, n_hi]`.
pub fn mp_drift(orbit: &MpOrbit, n_lo: usize, n_hi: usize) -> Result<DriftReport> {
    if n_hi > orbit.len() || n_lo < 1 || n_hi <= n_lo + 2 {
        return Err(Error::InvalidParameter(format!("window [{n_lo}, {n_hi}] does not fit the orbit")));
    }
    let mid = (n_lo + n_hi) / 2;
    let spread = |a: usize, b: usize| {
        let vals: Vec<f64> = (a..=b).map(|n| orbit.asymptotic_residual(n)).collect();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let lower_spread = spread(n_lo, mid);
    let upper_spread = spread(mid, n_hi);
    Ok(DriftReport { lower_spread, upper_spread, bounded: upper_spread <= 2.0 * lower_spread })
}

pub fn mp_potential(alpha: f64, p1: f64, p2: f64, b: f64) -> Result<Potential> {
    Potential::mp(alpha, p1, p2, b)
}

/// The first-return scheme to `X = (y_1, 1]` built from the backward orbit:
/// `X_i = (x_i, x_{i-1}]` with `f(x_i) = y_i`, `x_0 = 1` and `tau_i = i`.
/// The horizon is cut where consecutive `x_i` stop being distinct doubles.
pub fn mp_scheme(orbit: &MpOrbit, horizon: usize) -> Result<InducingScheme> {
    if horizon < 2 || horizon > orbit.len() {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must lie in 2..={}", orbit.len())));
    }
    let map = PiecewiseMonotoneMap::manneville_pomeau(orbit.alpha)?;
    let right = &map.branches()[1];
    let mut xs = vec![1.0];
    for i in 1..=horizon {
        let x = right.inverse(orbit.y[i]);
        if !(x < xs[i - 1]) {
            break;
        }
        xs.push(x);
    }
    let horizon = xs.len() - 1;
    let branches = (1..=horizon)
        .map(|i| {
            let mut word = vec![0u8; i];
            word[0] = 1;
            SchemeBranch { span: Span { lo: xs[i], hi: xs[i - 1], lo_closed: false, hi_closed: true }, tau: i, word, increasing: true }
        })
        .collect();
    let base = Span { lo: orbit.y[1], hi: 1.0, lo_closed: false, hi_closed: true };
    InducingScheme::new(&map, base, branches, horizon, TailShape::OnePerTime)
}

/// `Phi|_{X_n}` bounds and the fitted constant in `|Phi|_{X_n} + 2 log n - A| <= C / n`.
#[derive(Debug, Clone)]
pub struct MpInduced {
    pub induced: InducedPotential,
    pub asymptote: f64,
    pub c_bound: f64,
}

/// Induced MP potential. For nonincreasing `phi` the branch bounds come from orbit prefix sums:
/// `sup Phi_n = phi(x in X) + sum_{j=2}^{n} phi(y_j)` and `inf Phi_n = phi(X) + sum_{j=1}^{n-1} phi(y_j)`.
pub fn mp_induced(orbit: &MpOrbit, scheme: &InducingScheme, phi: &Potential) -> Result<MpInduced> {
    let h = scheme.horizon();
    let base_value = phi.eval(1.0);
    let (binf, bsup, _) = phi.range_on(&scheme.base());
    let grid: Vec<f64> = (0..=4096).map(|i| phi.eval(i as f64 / 4096.0)).collect();
    let monotone = grid.windows(2).all(|w| w[1] <= w[0] + 1e-15) && fmath::abs(binf - bsup) < 1e-15;
    let (inf, sup): (Vec<f64>, Vec<f64>) = if monotone {
        let vals: Vec<f64> = orbit.y.iter().map(|&y| phi.eval(y)).collect();
        let mut pre = vec![0.0; h + 1];
        for j in 1..=h {
            pre[j] = pre[j - 1] + vals[j];
        }
        (1..=h)
            .map(|n| {
                let (lo, hi) = (base_value + pre[n - 1], base_value + pre[n] - vals[1]);
                (lo.min(hi), hi)
            })
            .unzip()
    } else {
        scheme
            .branches()
            .iter()
            .map(|b| {
                let (lo, hi, _) = phi.birkhoff_range(scheme.map(), &b.word, &b.span);
                (lo, hi)
            })
            .unzip()
    };
    let d = |n: usize, v: f64| v + 2.0 * fmath::ln(n as f64);
    let asymptote = d(h, sup[h - 1]);
    let window = (h / 2).max(1)..=h;
    let c_bound = window.clone().map(|n| n as f64 * fmath::abs(d(n, sup[n - 1]) - asymptote)).fold(0.0, f64::max);
    let spread = window
        .map(|n| fmath::abs(d(n, sup[n - 1]) - asymptote).max(fmath::abs(d(n, inf[n - 1]) - asymptote)))
        .fold(0.0, f64::max);
    let tail = TailModel::Closed {
        start: h,
        coeff_lo: fmath::exp(asymptote - 2.0 * spread),
        coeff_hi: fmath::exp(asymptote + 2.0 * spread),
        rate: 0.0,
        exponent: 2.0,
        offset: 0.0,
    };
    let induced = if monotone {
        let reference = mp_reference(scheme, phi);
        InducedPotential::from_parts(scheme, phi, inf, sup, reference, tail)?
    } else {
        InducedPotential::from_ranges(scheme, phi, inf, sup, tail)?
    };
    Ok(MpInduced { induced, asymptote, c_bound })
}

/// Birkhoff sums at the preimages of the base midpoint. With `w_j` the backward orbit of the
/// midpoint under the left branch, `Phi_i = phi(x_i) + sum_{1<=j<i} phi(w_j)`.
fn mp_reference(scheme: &InducingScheme, phi: &Potential) -> Vec<f64> {
    let map = scheme.map();
    let (left, right) = (&map.branches()[0], &map.branches()[1]);
    let base = scheme.base();
    let mut w = 0.5 * (base.lo + base.hi);
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(scheme.horizon());
    for i in 1..=scheme.horizon() {
        if i > 1 {
            w = left.inverse(w);
            acc += phi.eval(w);
        }
        out.push(phi.eval(right.inverse(w)) + acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpConfig {
    pub alpha: f64,
    pub b: f64,
    /// Orbit index with `p2 = y_N`.
    pub n_flat: usize,
    /// Orbit index with `p1 = y_K`, `K > N`.
    pub k_index: usize,
    pub p1: f64,
    pub p2: f64,
    pub horizon: usize,
    /// `sum_n e^{sup Phi_n}`.
    pub series: Enclosure,
    /// `B = sum_{n > N} e^{sup Phi_n}`, the part beyond `N`.
    pub residual: f64,
}

/// Searches `N <= n_search` with `p2 = y_N`, `p1 = y_{2N}` and `sum e^{s_n} <= 1`.
pub fn mp_configure_flat_pressure(alpha: f64, b: f64, n_search: usize, horizon: usize) -> Result<MpConfig> {
    if !(alpha > 0.0 && alpha < core::f64::consts::LN_2 / 2.0) {
        return Err(Error::Refused(format!("alpha = {alpha} lies outside (0, log 2 / 2)")));
    }
    if !(b < -core::f64::consts::LN_2) {
        return Err(Error::Refused(format!("b = {b} is not below -log 2")));
    }
    let orbit = mp_backward_orbit(alpha, horizon)?;
    let scheme = mp_scheme(&orbit, horizon)?;
    let horizon = scheme.horizon();
    for n in 1..=n_search {
        let k = 2 * n;
        if k + 2 >= horizon {
            break;
        }
        let (p1, p2) = (orbit.y[k], orbit.y[n]);
        let phi = mp_potential(alpha, p1, p2, b)?;
        let ind = mp_induced(&orbit, &scheme, &phi)?;
        let z = z0(&ind.induced);
        if z.finite && z.value.upper <= 1.0 {
            let residual = ind.induced.branch_sup[n..].iter().map(|v| fmath::exp(*v)).sum::<f64>() + z.tail.upper;
            return Ok(MpConfig { alpha, b, n_flat: n, k_index: k, p1, p2, horizon, series: z.value, residual });
        }
    }
    Err(Error::Refused(format!("no N <= {n_search} brings the series below 1")))
}

#[derive(Debug, Clone)]
pub struct MpVerdict {
    pub status: Projectability,
    pub z0: Z0Report,
    pub equilibrium: EquilibriumResult,
    pub c_bound: f64,
    /// `(N, sum_{n<=N} n p_n)`.
    pub mean_time_partial: Vec<(usize, f64)>,
    /// Partial sums against `sum_{n<=N} 1/(n+1)`.
    pub harmonic_fit: Option<LineFit>,
    /// Largest `|fit - S_N| / S_N` over the fit window.
    pub harmonic_residual: f64,
}

/// Builds the scheme on `(y_1, 1]`, the Gibbs state and the projectability verdict.
pub fn mp_inducing_verdict(alpha: f64, p1: f64, p2: f64, b: f64, horizon: usize) -> Result<MpVerdict> {
    let orbit = mp_backward_orbit(alpha, horizon)?;
    let scheme = mp_scheme(&orbit, horizon)?;
    let phi = mp_potential(alpha, p1, p2, b)?;
    let ind = mp_induced(&orbit, &scheme, &phi)?;
    let z = z0(&ind.induced);
    let equilibrium = solve_equilibrium(&ind.induced, &EquilibriumOptions::default())?;
    let weights = &equilibrium.state.weights.weights;
    let mut acc = 0.0;
    let partial: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, p)| {
            acc += (i + 1) as f64 * p;
            (i + 1, acc)
        })
        .collect();
    let (harmonic_fit, harmonic_residual) = harmonic_fit(&partial, (scheme.horizon() / 10).max(2));
    Ok(MpVerdict {
        status: equilibrium.status,
        z0: z,
        equilibrium,
        c_bound: ind.c_bound,
        mean_time_partial: partial,
        harmonic_fit,
        harmonic_residual,
    })
}

/// Fits `S_N = c H_N + d` with `H_N = sum_{n<=N} 1/(n+1)` over `N >= from`.
pub fn harmonic_fit(partial: &[(usize, f64)], from: usize) -> (Option<LineFit>, f64) {
    let mut h = 0.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(n, s) in partial {
        h += 1.0 / (n as f64 + 1.0);
        if n >= from {
            xs.push(h);
            ys.push(s);
        }
    }
    let fit = numeric::fit_line(&xs, &ys);
    let resid = fit
        .map(|f| xs.iter().zip(&ys).map(|(x, y)| fmath::abs(f.eval(*x) - y) / fmath::abs(*y)).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);
    (fit, resid)
}

/// `sum_{n<=N} n p_n` at the given `N`, with `p_n = e^{s_n - n P - P_G}` from the closed form.
pub fn hk_mean_time_partial(family: &StepFamily, pressure: f64, log_norm: f64, ns: &[usize]) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(ns.len());
    let mut acc = 0.0;
    let mut n = 0;
    for &target in ns {
        while n < target {
            n += 1;
            acc += n as f64 * fmath::exp(family.s(n) - n as f64 * pressure - log_norm);
        }
        out.push((target, acc));
    }
    out
}

/// Fits `S_N = c log N + d` and returns the largest relative residual.
pub fn log_growth_fit(partial: &[(usize, f64)]) -> (Option<LineFit>, f64) {
    let xs: Vec<f64> = partial.iter().map(|(n, _)| fmath::ln(*n as f64)).collect();
    let ys: Vec<f64> = partial.iter().map(|(_, s)| *s).collect();
    let fit = numeric::fit_line(&xs, &ys);
    let resid = fit
        .map(|f| xs.iter().zip(&ys).map(|(x, y)| fmath::abs(f.eval(*x) - y) / fmath::abs(*y)).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);
    (fit, resid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpScanRow {
    pub alpha: f64,
    pub b: f64,
    pub config: Option<MpConfig>,
    pub status: Option<Projectability>,
}

/// Flat-pressure configuration and verdict over an `(alpha, b)` grid.
pub fn mp_scan(alphas: &[f64], bs: &[f64], n_search: usize, horizon: usize) -> Vec<MpScanRow> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        for &b in bs {
            let config = mp_configure_flat_pressure(alpha, b, n_search, horizon).ok();
            let status = config
                .as_ref()
                .and_then(|c| mp_inducing_verdict(alpha, c.p1, c.p2, b, horizon).ok())
                .map(|v| v.status);
            rows.push(MpScanRow { alpha, b, config, status });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_recursion() {
        let f = StepFamily::hk(-0.7, 3).unwrap();
        for n in 0..40 {
            assert!((f.s(n + 1) - f.s(n) - f.a(n)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn two_cycle_is_exact() {
        let c = hk_cycle(&StepFamily::hk(-1.0, 2).unwrap(), 2).unwrap();
        assert_eq!(c.points, vec![Ratio::new(2, 3), Ratio::new(1, 3)]);
        assert!(c.closes);
    }

    #[test]
    fn one_cycle_is_the_endpoint() {
        let c = hk_cycle(&StepFamily::hk(-1.0, 2).unwrap(), 1).unwrap();
        assert_eq!(c.points, vec![Ratio::from_integer(1)]);
        assert!(c.closes);
    }

    #[test]
    fn very_negative_b_sends_series_to_zero() {
        let r = hk_series(&StepFamily::hk(-40.0, 2).unwrap(), 100).unwrap();
        assert!(r.value.upper < 1e-15);
    }

    #[test]
    fn orbit_starts_at_the_split() {
        let o = mp_backward_orbit(0.3, 10).unwrap();
        let y1 = o.y[1];
        assert!((y1 + y1.powf(1.3) - 1.0).abs() < 1e-15);
        assert!(o.y.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }
}
