//! Small numeric toolkit: enclosures, log-space sums, regressions and root finding.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

/// A value with a lower and upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enclosure {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl Enclosure {
    pub fn exact(v: f64) -> Self {
        Enclosure { lower: v, value: v, upper: v }
    }

    pub fn new(lower: f64, value: f64, upper: f64) -> Self {
        Enclosure { lower, value, upper }
    }

    /// Enclosure whose value is the midpoint of the bounds.
    pub fn from_bounds(lower: f64, upper: f64) -> Self {
        let value = if lower.is_finite() && upper.is_finite() {
            0.5 * (lower + upper)
        } else if lower.is_finite() {
            lower
        } else {
            upper
        };
        Enclosure { lower, value, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_finite(&self) -> bool {
        self.upper.is_finite()
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }

    pub fn shift(&self, c: f64) -> Self {
        Enclosure::new(self.lower + c, self.value + c, self.upper + c)
    }

    pub fn add(&self, other: &Enclosure) -> Self {
        Enclosure::new(
            self.lower + other.lower,
            self.value + other.value,
            self.upper + other.upper,
        )
    }
}

/// Rate estimate with rigorous-where-possible bounds and the per-`n` diagnostic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Range of `n` used.
    pub window: (usize, usize),
    /// `(1/n) log S_n` for each `n` in the window.
    pub diagnostics: Vec<f64>,
}

impl PressureEstimate {
    pub fn new(value: f64, lower: f64, upper: f64, window: (usize, usize), diagnostics: Vec<f64>) -> Self {
        PressureEstimate { value, lower, upper, window, diagnostics }
    }

    pub fn enclosure(&self) -> Enclosure {
        Enclosure::new(self.lower, self.value, self.upper)
    }
}

/// Running sum of exponentials kept as `log(sum)` with a max shift.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    /// Adds `exp(log_term)`.
    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += fmath::exp(log_term - self.max);
        } else {
            self.scaled = self.scaled * fmath::exp(self.max - log_term) + 1.0;
            self.max = log_term;
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        self.add(other.max + fmath::ln(other.scaled));
    }

    /// Natural log of the accumulated sum; `-inf` when empty.
    pub fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + fmath::ln(self.scaled)
        }
    }

    pub fn value(&self) -> f64 {
        fmath::exp(self.ln())
    }
}

/// `log(sum(exp(x_i)))` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.ln()
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Maximal absolute residual.
    pub max_residual: f64,
    /// Root mean square residual.
    pub rms_residual: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut max_residual: f64 = 0.0;
    let mut ss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        max_residual = max_residual.max(fmath::abs(r));
        ss += r * r;
    }
    Some(LineFit { slope, intercept, max_residual, rms_residual: fmath::sqrt(ss / nf) })
}

/// Index range covering the final third of `len` samples (at least two points).
pub fn final_third(len: usize) -> core::ops::Range<usize> {
    let take = (len / 3).max(2).min(len);
    len - take..len
}

/// Index range covering the final half of `len` samples (at least two points).
pub fn final_half(len: usize) -> core::ops::Range<usize> {
    let take = (len / 2).max(2).min(len);
    len - take..len
}

/// Growth-rate estimate from `(n, log S_n)` pairs: slope over the final third.
pub fn window_rate(ns: &[f64], logs: &[f64]) -> Option<LineFit> {
    let w = final_third(ns.len());
    let (xs, ys): (Vec<f64>, Vec<f64>) = w
        .clone()
        .filter(|&i| logs[i].is_finite())
        .map(|i| (ns[i], logs[i]))
        .unzip();
    fit_line(&xs, &ys)
}

/// Bisection for a sign change of `g` on `[lo, hi]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut g: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let mut glo = g(lo);
    let ghi = g(hi);
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if (glo > 0.0) == (ghi > 0.0) || glo.is_nan() || ghi.is_nan() {
        return Err(Error::NoConvergence(alloc::format!(
            "no sign change on [{lo}, {hi}]: g = ({glo}, {ghi})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= tol * 16.0 {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::NoConvergence(alloc::format!("bisection stalled at width {}", hi - lo)))
    }
}

/// Composite Gauss-Legendre rule (8 nodes per panel) on `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut g: F, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let c = lo + 0.5 * h;
        let r = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
            s += w * (g(c - r * x) + g(c + r * x));
        }
        total += s * r;
    }
    total
}
