//! Partition sums, periodic-orbit sums, pressures and recurrence.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::interval_map::{PeriodicPoint, PiecewiseMonotoneMap};
use crate::numeric::{self, Enclosure, LineFit, LogSum, PressureEstimate};
use crate::potential::{Potential, Span};

/// `log Z^top_m`: the upper value uses outer sup enclosures, the lower one sampled sups.
pub fn log_z_top(map: &PiecewiseMonotoneMap, phi: &Potential, m: usize) -> Result<Enclosure> {
    let mut upper = LogSum::new();
    let mut lower = LogSum::new();
    map.for_each_cylinder(m, &[], |c| {
        let span = Span::from_interval(&c.interval);
        let (_, sup, exact) = phi.birkhoff_range(map, c.word, &span);
        upper.add(sup);
        if exact {
            lower.add(sup);
        } else {
            let mid = phi.birkhoff_along(map, c.word, c.interval.midpoint());
            let left = phi.birkhoff_along(map, c.word, c.interval.lo());
            lower.add(mid.max(left));
        }
    })?;
    Ok(Enclosure::new(lower.ln(), upper.ln(), upper.ln()))
}

pub fn z_top(map: &PiecewiseMonotoneMap, phi: &Potential, m: usize) -> Result<f64> {
    Ok(fmath::exp(log_z_top(map, phi, m)?.value))
}

/// Topological pressure from `Z^top_m`, `m = 1..=m_max`.
pub fn p_top(map: &PiecewiseMonotoneMap, phi: &Potential, m_max: usize) -> Result<PressureEstimate> {
    if m_max < 2 {
        return Err(Error::InvalidParameter("m_max must be at least 2".into()));
    }
    let mut logs = Vec::with_capacity(m_max);
    let mut lows = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let e = log_z_top(map, phi, m)?;
        logs.push(e.value);
        lows.push(e.lower);
    }
    let ns: Vec<f64> = (1..=m_max).map(|m| m as f64).collect();
    let diagnostics: Vec<f64> = logs.iter().zip(&ns).map(|(l, n)| l / n).collect();
    let upper = diagnostics.iter().cloned().fold(f64::INFINITY, f64::min);
    let value = numeric::window_rate(&ns, &logs).map(|f| f.slope).unwrap_or(upper).min(upper);
    let lower_slope = numeric::window_rate(&ns, &lows).map(|f| f.slope).unwrap_or(value);
    let window = numeric::final_third(m_max);
    Ok(PressureEstimate::new(value, lower_slope.min(value), upper, (window.start + 1, m_max), diagnostics))
}

/// True when the periodic itinerary `word^inf`, shifted by `k`, starts with `cyl`.
pub fn cyclic_starts_with(word: &[u8], k: usize, cyl: &[u8]) -> bool {
    let n = word.len();
    cyl.iter().enumerate().all(|(j, &c)| word[(k + j) % n] == c)
}

/// Periodic points of period `n` lying in the cylinder with word `cyl`.
pub fn periodic_points_in(map: &PiecewiseMonotoneMap, cyl: &[u8], n: usize) -> Result<Vec<PeriodicPoint>> {
    let prefix = &cyl[..cyl.len().min(n)];
    let pts = map.periodic_points_within(n, prefix)?;
    Ok(pts.into_iter().filter(|p| cyclic_starts_with(&p.word, 0, cyl)).collect())
}

/// `log Z_n(phi, C)`.
pub fn log_z_n(map: &PiecewiseMonotoneMap, phi: &Potential, cyl: &[u8], n: usize) -> Result<f64> {
    let mut acc = LogSum::new();
    for p in periodic_points_in(map, cyl, n)? {
        acc.add(phi.birkhoff_along(map, &p.word, p.x));
    }
    Ok(acc.ln())
}

/// `log Z*_n(phi, C)`: orbits returning to `C` for the first time at `n`.
pub fn log_z_n_star(map: &PiecewiseMonotoneMap, phi: &Potential, cyl: &[u8], n: usize) -> Result<f64> {
    let mut acc = LogSum::new();
    for p in periodic_points_in(map, cyl, n)? {
        if (1..n).all(|k| !cyclic_starts_with(&p.word, k, cyl)) {
            acc.add(phi.birkhoff_along(map, &p.word, p.x));
        }
    }
    Ok(acc.ln())
}

pub fn z_n(map: &PiecewiseMonotoneMap, phi: &Potential, cyl: &[u8], n: usize) -> Result<f64> {
    Ok(fmath::exp(log_z_n(map, phi, cyl, n)?))
}

pub fn z_n_star(map: &PiecewiseMonotoneMap, phi: &Potential, cyl: &[u8], n: usize) -> Result<f64> {
    Ok(fmath::exp(log_z_n_star(map, phi, cyl, n)?))
}

/// Gurevich pressure: window regression of `log Z_n(phi, C)`; `-inf` when the window is empty.
pub fn gurevich_pressure(map: &PiecewiseMonotoneMap, phi: &Potential, cyl: &[u8], n_max: usize) -> Result<PressureEstimate> {
    if n_max < 4 {
        return Err(Error::InvalidParameter("n_max must be at least 4".into()));
    }
    let logs = (1..=n_max).map(|n| log_z_n(map, phi, cyl, n)).collect::<Result<Vec<f64>>>()?;
    Ok(rate_from_logs(&logs))
}

fn rate_from_logs(logs: &[f64]) -> PressureEstimate {
    let n_max = logs.len();
    let ns: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let diagnostics: Vec<f64> = logs.iter().zip(&ns).map(|(l, n)| l / n).collect();
    let window = numeric::final_third(n_max);
    let span = (window.start + 1, n_max);
    let fit = numeric::window_rate(&ns, logs);
    match fit {
        None => {
            let v = f64::NEG_INFINITY;
            PressureEstimate::new(v, v, v, span, diagnostics)
        }
        Some(f) => {
            let tail = &diagnostics[window];
            let finite = tail.iter().cloned().filter(|d| d.is_finite());
            let lo = finite.clone().fold(f.slope, f64::min);
            let hi = finite.fold(f.slope, f64::max);
            PressureEstimate::new(f.slope, lo, hi, span, diagnostics)
        }
    }
}

/// Gurevich pressure from two base cylinders and their disagreement.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceCheck {
    pub first: PressureEstimate,
    pub second: PressureEstimate,
    pub difference: f64,
    /// Sum of the two enclosure widths.
    pub combined_tolerance: f64,
}

impl IndependenceCheck {
    pub fn agrees(&self) -> bool {
        self.difference <= self.combined_tolerance
    }
}

pub fn gurevich_independence(
    map: &PiecewiseMonotoneMap,
    phi: &Potential,
    first: &[u8],
    second: &[u8],
    n_max: usize,
) -> Result<IndependenceCheck> {
    let a = gurevich_pressure(map, phi, first, n_max)?;
    let b = gurevich_pressure(map, phi, second, n_max)?;
    let tol = (a.upper - a.lower) + (b.upper - b.lower);
    Ok(IndependenceCheck { difference: fmath::abs(a.value - b.value), combined_tolerance: tol, first: a, second: b })
}

/// Growth model fitted to a partial-sum sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthModel {
    Bounded,
    Geometric,
    Power,
    Logarithmic,
    Linear,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesVerdict {
    Convergent { model: GrowthModel, rate: f64 },
    Divergent { model: GrowthModel, rate: f64 },
    Undetermined,
}

impl SeriesVerdict {
    pub fn is_divergent(&self) -> bool {
        matches!(self, SeriesVerdict::Divergent { .. })
    }

    pub fn is_convergent(&self) -> bool {
        matches!(self, SeriesVerdict::Convergent { .. })
    }
}

/// Thresholds for deciding convergence of a series from finitely many terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergencePolicy {
    pub cap: f64,
    /// Log-term slope below which geometric decay counts as convergent.
    pub geometric_slope: f64,
    /// Log-log exponent below which power decay counts as convergent.
    pub power_exponent: f64,
    /// Relative residual allowed for a growth fit.
    pub residual: f64,
}

impl Default for DivergencePolicy {
    fn default() -> Self {
        DivergencePolicy { cap: 1e6, geometric_slope: -0.01, power_exponent: -1.5, residual: 0.05 }
    }
}

impl DivergencePolicy {
    /// Classifies `sum_n exp(log_terms[n-1])`.
    pub fn classify(&self, log_terms: &[f64]) -> SeriesVerdict {
        let partial = partial_sums(log_terms);
        let Some(&last) = partial.last() else { return SeriesVerdict::Undetermined };
        if last > self.cap {
            return SeriesVerdict::Divergent { model: GrowthModel::Cap, rate: f64::INFINITY };
        }
        let w = numeric::final_half(log_terms.len());
        let idx: Vec<usize> = w.clone().filter(|&i| log_terms[i].is_finite()).collect();
        if idx.is_empty() && last.is_finite() {
            return SeriesVerdict::Convergent { model: GrowthModel::Bounded, rate: f64::NEG_INFINITY };
        }
        let ys: Vec<f64> = idx.iter().map(|&i| log_terms[i]).collect();
        let ns: Vec<f64> = idx.iter().map(|&i| (i + 1) as f64).collect();
        let lns: Vec<f64> = ns.iter().map(|&n| fmath::ln(n)).collect();
        let geo = numeric::fit_line(&ns, &ys);
        let pow = numeric::fit_line(&lns, &ys);
        let geometric_wins = match (geo, pow) {
            (Some(g), Some(p)) => g.rms_residual <= p.rms_residual,
            (Some(_), None) => true,
            _ => false,
        };
        if geometric_wins {
            if let Some(g) = geo {
                if g.slope < self.geometric_slope {
                    return SeriesVerdict::Convergent { model: GrowthModel::Geometric, rate: g.slope };
                }
            }
        } else if let Some(p) = pow {
            if p.slope < self.power_exponent {
                return SeriesVerdict::Convergent { model: GrowthModel::Power, rate: p.slope };
            }
        }
        let ws: Vec<f64> = w.clone().map(|i| partial[i]).collect();
        let wn: Vec<f64> = w.map(|i| (i + 1) as f64).collect();
        let wl: Vec<f64> = wn.iter().map(|&n| fmath::ln(n)).collect();
        let scale = fmath::abs(last).max(1e-300);
        let accept = |f: &LineFit| f.slope > 0.0 && f.max_residual / scale < self.residual;
        if let Some(f) = numeric::fit_line(&wl, &ws) {
            if accept(&f) {
                return SeriesVerdict::Divergent { model: GrowthModel::Logarithmic, rate: f.slope };
            }
        }
        if let Some(f) = numeric::fit_line(&wn, &ws) {
            if accept(&f) {
                return SeriesVerdict::Divergent { model: GrowthModel::Linear, rate: f.slope };
            }
        }
        SeriesVerdict::Undetermined
    }
}

/// Running sums of `exp(log_terms)`.
pub fn partial_sums(log_terms: &[f64]) -> Vec<f64> {
    let mut acc = LogSum::new();
    log_terms
        .iter()
        .map(|&t| {
            acc.add(t);
            acc.value()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecurrenceClass {
    Recurrent,
    NullRecurrent,
    PositiveRecurrent,
    Transient,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceReport {
    pub class: RecurrenceClass,
    /// `sum_{n<=N} lambda^-n Z_n(phi, C)`.
    pub partial_sums: Vec<f64>,
    /// `sum_{n<=N} n lambda^-n Z*_n(phi, C')`.
    pub weighted_star_sums: Vec<f64>,
    pub recurrence: SeriesVerdict,
    pub return_time: SeriesVerdict,
}

/// Recurrence class from `Z_n` on `cyl` and first returns `Z*_n` on `star_cyl`.
pub fn recurrence_classify(
    map: &PiecewiseMonotoneMap,
    phi: &Potential,
    cyl: &[u8],
    star_cyl: &[u8],
    lambda: f64,
    n_max: usize,
    policy: &DivergencePolicy,
) -> Result<RecurrenceReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let ll = fmath::ln(lambda);
    let mut rec_terms = Vec::with_capacity(n_max);
    let mut star_terms = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let nf = n as f64;
        rec_terms.push(log_z_n(map, phi, cyl, n)? - nf * ll);
        star_terms.push(log_z_n_star(map, phi, star_cyl, n)? - nf * ll + fmath::ln(nf));
    }
    Ok(classify_terms(&rec_terms, &star_terms, policy))
}

/// Classification from precomputed log-terms of both series.
pub fn classify_terms(rec_terms: &[f64], star_terms: &[f64], policy: &DivergencePolicy) -> RecurrenceReport {
    let recurrence = policy.classify(rec_terms);
    let return_time = policy.classify(star_terms);
    let class = match (recurrence, return_time) {
        (SeriesVerdict::Convergent { .. }, _) => RecurrenceClass::Transient,
        (SeriesVerdict::Divergent { .. }, SeriesVerdict::Convergent { .. }) => RecurrenceClass::PositiveRecurrent,
        (SeriesVerdict::Divergent { .. }, SeriesVerdict::Divergent { .. }) => RecurrenceClass::NullRecurrent,
        (SeriesVerdict::Divergent { .. }, SeriesVerdict::Undetermined) => RecurrenceClass::Recurrent,
        (SeriesVerdict::Undetermined, _) => RecurrenceClass::Undetermined,
    };
    RecurrenceReport {
        class,
        partial_sums: partial_sums(rec_terms),
        weighted_star_sums: partial_sums(star_terms),
        recurrence,
        return_time,
    }
}

/// `eta_n = Z_n e^(beta_n) e^(-n P_top)` with its running minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub ns: Vec<usize>,
    pub eta: Vec<f64>,
    pub running_min: Vec<f64>,
    pub p_top: f64,
    pub min: f64,
    /// Relative change of the running minimum over the window.
    pub variation: f64,
}

impl LowerBoundReport {
    pub fn is_stable(&self) -> bool {
        self.min > 0.0 && self.variation < 0.5
    }
}

pub fn znlowerbound_check(
    map: &PiecewiseMonotoneMap,
    phi: &Potential,
    n_lo: usize,
    n_hi: usize,
) -> Result<LowerBoundReport> {
    if n_lo < 1 || n_hi < n_lo.max(2) {
        return Err(Error::InvalidParameter("need 1 <= n_lo <= n_hi and n_hi >= 2".into()));
    }
    let pt = p_top(map, phi, n_hi)?.value;
    let mut ns = Vec::new();
    let mut eta = Vec::new();
    let mut running_min = Vec::new();
    let mut cur = f64::INFINITY;
    for n in n_lo..=n_hi {
        let lz = log_z_n(map, phi, &[], n)?;
        let beta = phi.beta_n(map, n)?.upper;
        let e = fmath::exp(lz + beta - n as f64 * pt);
        cur = cur.min(e);
        ns.push(n);
        eta.push(e);
        running_min.push(cur);
    }
    let first = running_min[0];
    let variation = if first > 0.0 { (first - cur) / first } else { f64::INFINITY };
    Ok(LowerBoundReport { ns, eta, running_min, p_top: pt, min: cur, variation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_top_counts_laps() {
        let f = PiecewiseMonotoneMap::doubling();
        assert!((z_top(&f, &Potential::constant(0.0), 5).unwrap() - 32.0).abs() < 1e-9);
        let c = 0.3;
        let z = z_top(&f, &Potential::constant(c), 4).unwrap();
        assert!((z - 16.0 * fmath::exp(4.0 * c)).abs() < 1e-9);
    }

    #[test]
    fn periodic_sums_on_doubling() {
        let f = PiecewiseMonotoneMap::doubling();
        let zero = Potential::constant(0.0);
        assert!((z_n(&f, &zero, &[], 4).unwrap() - 15.0).abs() < 1e-9);
        for n in 1..=8 {
            assert!((z_n_star(&f, &zero, &[1], n).unwrap() - 1.0).abs() < 1e-12, "n={n}");
        }
        assert_eq!(z_n_star(&f, &zero, &[0], 1).unwrap(), z_n(&f, &zero, &[0], 1).unwrap());
    }

    #[test]
    fn p_top_of_constants() {
        let f = PiecewiseMonotoneMap::doubling();
        let p = p_top(&f, &Potential::constant(0.0), 8).unwrap();
        assert!((p.value - fmath::LN_2).abs() < 1e-12 && (p.upper - fmath::LN_2).abs() < 1e-12);
        let q = p_top(&f, &Potential::constant(-0.7), 8).unwrap();
        assert!((q.value - (fmath::LN_2 - 0.7)).abs() < 1e-12);
    }

    #[test]
    fn policy_separates_harmonic_from_geometric() {
        let p = DivergencePolicy::default();
        let harmonic: Vec<f64> = (1..=30).map(|n| -fmath::ln(n as f64)).collect();
        assert!(p.classify(&harmonic).is_divergent());
        let geometric: Vec<f64> = (1..=30).map(|n| -0.3 * n as f64).collect();
        assert!(p.classify(&geometric).is_convergent());
        let square: Vec<f64> = (1..=30).map(|n| -2.0 * fmath::ln(n as f64)).collect();
        assert!(p.classify(&square).is_convergent());
        let constant = vec![0.0; 30];
        assert!(p.classify(&constant).is_divergent());
    }
}
