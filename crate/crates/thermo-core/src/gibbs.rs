//! Gibbs states on induced full shifts, tails, the discriminant, the equilibrium
//! pipeline and pressure-function scans.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::inducing::{
    project_integral, svi_report, BranchWeights, InducedPotential, TailModel, TailSum, WithinBranch,
};
use crate::numeric::{self, Enclosure, LogSum};

/// Enumeration budget for depth-`m` cylinder sums.
const WORD_BUDGET: usize = 200_000;

/// `P_G` of an induced potential on its full shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftPressure {
    /// `value` is `+inf` when the pressure is infinite.
    pub estimate: Enclosure,
    pub finite: bool,
    /// Cylinder depth actually used.
    pub depth: usize,
    /// True for branchwise-constant potentials, where only the tail is uncertain.
    pub exact: bool,
}

impl ShiftPressure {
    pub fn value(&self) -> f64 {
        self.estimate.value
    }

    fn infinite(depth: usize, exact: bool) -> Self {
        let inf = f64::INFINITY;
        ShiftPressure { estimate: Enclosure::new(inf, inf, inf), finite: false, depth, exact }
    }
}

fn ln_plus(a: &LogSum, t: f64) -> f64 {
    let mut s = *a;
    if t > 0.0 {
        s.add(fmath::ln(t));
    }
    s.ln()
}

/// `P_G(Psi) = lim (1/n) log Z_n`. Branchwise-constant potentials give `log sum e^{Psi_i}` plus the
/// tail; otherwise sup and inf cylinder sums at depths up to `depth` bracket the value.
pub fn full_shift_pressure(induced: &InducedPotential, depth: usize) -> ShiftPressure {
    let exact = induced.is_branchwise_constant();
    let tail = induced.tail.sum(false);
    if induced.unbounded || tail.divergent || !tail.upper.is_finite() {
        return ShiftPressure::infinite(1, exact);
    }
    let mut sup_sum = LogSum::new();
    let mut inf_sum = LogSum::new();
    let mut ref_sum = LogSum::new();
    for ((lo, hi), r) in induced.branch_inf.iter().zip(&induced.branch_sup).zip(induced.reference_values().iter().copied()) {
        inf_sum.add(*lo);
        sup_sum.add(*hi);
        ref_sum.add(r);
    }
    let value = ln_plus(&ref_sum, tail.value);
    let mut lower = ln_plus(&inf_sum, tail.lower);
    let mut upper = ln_plus(&sup_sum, tail.upper);
    let mut used = 1;
    if !exact {
        let b = induced.len();
        let f_sup = fmath::exp(upper);
        let mut m = 2;
        while m <= depth && fmath::powi(b as f64, m as i32) <= WORD_BUDGET as f64 {
            let (zi, zs) = cylinder_sums(induced, m);
            let lo_m = zi.ln() / m as f64;
            let extra = fmath::powi(f_sup, m as i32) - fmath::exp(m as f64 * ln_plus(&sup_sum, 0.0));
            let hi_m = ln_plus(&zs, extra.max(0.0)) / m as f64;
            lower = lower.max(lo_m);
            upper = upper.min(hi_m);
            used = m;
            m += 1;
        }
    }
    ShiftPressure { estimate: Enclosure::new(lower.min(value), value, upper.max(value)), finite: true, depth: used, exact }
}

/// `(sum_w e^{inf Psi_m|[w]}, sum_w e^{sup Psi_m|[w]})` over all words of length `m`.
fn cylinder_sums(induced: &InducedPotential, m: usize) -> (LogSum, LogSum) {
    let b = induced.len();
    let mut zi = LogSum::new();
    let mut zs = LogSum::new();
    let mut word = vec![0usize; m];
    loop {
        let (mut lo, mut hi) = (0.0, 0.0);
        for k in 0..m {
            let (a, c) = induced.cylinder_range(&word[k..]);
            lo += a;
            hi += c;
        }
        zi.add(lo);
        zs.add(hi);
        let mut k = m;
        loop {
            if k == 0 {
                return (zi, zs);
            }
            k -= 1;
            word[k] += 1;
            if word[k] < b {
                break;
            }
            word[k] = 0;
        }
    }
}

/// Invariant Gibbs measure of an induced potential.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub weights: BranchWeights,
    /// `P_G(Psi)` used for normalization.
    pub pressure: ShiftPressure,
    /// Constant `K` in `1/K <= mu(C_n) / e^{Psi_n - n P_G} <= K`.
    pub gibbs_constant: f64,
    pub depth: usize,
    /// Branch weights are exact closed forms.
    pub exact: bool,
    /// Tail model of `Psi`; tail masses are this times `e^{-P_G}`.
    pub tail_model: TailModel,
    taus: Vec<usize>,
}

pub fn gibbs_state(induced: &InducedPotential, depth: usize) -> Result<GibbsState> {
    let pressure = full_shift_pressure(induced, depth);
    if !pressure.finite {
        return Err(Error::Refused("the induced pressure is infinite, so there is no Gibbs state".into()));
    }
    let p = pressure.value();
    let weights: Vec<f64> = induced.reference_values().iter().map(|v| fmath::exp(v - p)).collect();
    let norm = fmath::exp(-p);
    let tail_mass = induced.tail.sum(false).scale(norm);
    let tail_tau_mass = induced.tail.sum(true).scale(norm);
    let exact = pressure.exact;
    let gibbs_constant = if exact {
        1.0
    } else {
        let r = svi_report(induced, depth.max(1), 8);
        fmath::exp(2.0 * r.variations.iter().sum::<f64>() + (pressure.estimate.upper - pressure.estimate.lower))
    };
    Ok(GibbsState {
        weights: BranchWeights { weights, tail_mass, tail_tau_mass, profile: WithinBranch::Conjugated { depth: 1 } },
        pressure,
        gibbs_constant,
        depth: pressure.depth,
        exact,
        tail_model: induced.tail,
        taus: induced.taus(),
    })
}

impl GibbsState {
    /// `sum_i p_i` plus the tail estimate.
    pub fn total_mass(&self) -> f64 {
        self.weights.weights.iter().sum::<f64>() + self.weights.tail_mass.value
    }

    /// `Lambda = sum_i tau_i p_i`, with tail.
    pub fn lambda(&self) -> TailSum {
        let finite: f64 = self.taus.iter().zip(&self.weights.weights).map(|(t, p)| *t as f64 * p).sum();
        let t = self.weights.tail_tau_mass;
        if t.divergent {
            return TailSum::divergent();
        }
        TailSum { lower: finite + t.lower, value: finite + t.value, upper: finite + t.upper, divergent: false }
    }

    /// `mu(C_w)`: a product of branch weights when exact, otherwise the conformal reference value.
    pub fn cylinder_mass(&self, induced: &InducedPotential, word: &[usize]) -> f64 {
        if self.exact {
            return word.iter().map(|&i| self.weights.weights[i]).product();
        }
        let base = induced.scheme().base();
        let x = pull_back_word(induced, word, 0.5 * (base.lo + base.hi));
        fmath::exp(induced_birkhoff(induced, x, word.len()) - word.len() as f64 * self.pressure.value())
    }

    /// `mu(tau > n)` for `n = 0..=n_max`.
    pub fn tail_table(&self, n_max: usize) -> TailTable {
        let norm = fmath::exp(-self.pressure.value());
        let rows: Vec<TailRow> = (0..=n_max)
            .map(|n| {
                let finite: f64 = self.taus.iter().zip(&self.weights.weights).filter(|(t, _)| **t > n).map(|(_, p)| p).sum();
                let t = self.tail_model.sum_above(n, false).scale(norm);
                TailRow { n, lower: finite + t.lower, value: finite + t.value, upper: finite + t.upper }
            })
            .collect();
        TailTable::from_rows(rows)
    }
}

fn pull_back_word(induced: &InducedPotential, word: &[usize], y: f64) -> f64 {
    word.iter().rev().fold(y, |x, &i| induced.scheme().branch_inverse(i, x))
}

fn induced_birkhoff(induced: &InducedPotential, x: f64, n: usize) -> f64 {
    let mut y = x;
    let mut s = 0.0;
    for _ in 0..n {
        match induced.scheme().branch_at(y) {
            Some(i) => {
                s += induced.eval(y).unwrap_or(induced.branch_sup[i]);
                y = induced.scheme().branch_apply(i, y);
            }
            None => return f64::NAN,
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsCheck {
    pub cylinders: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub holds: bool,
}

/// Checks `1/K <= mu(C_w) / e^{Psi_n(x) - n P_G} <= K` at three points of every cylinder of depth
/// `1..=depth` over the first `branch_cap` branches.
pub fn gibbs_check(state: &GibbsState, induced: &InducedPotential, depth: usize, branch_cap: usize) -> GibbsCheck {
    let b = branch_cap.min(induced.len()).max(1);
    let base = induced.scheme().base();
    let w = base.hi - base.lo;
    let probes = [base.lo + 1e-3 * w, base.lo + 0.5 * w, base.hi - 1e-3 * w];
    let p = state.pressure.value();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    for n in 1..=depth {
        let mut word = vec![0usize; n];
        'words: loop {
            let mass = state.cylinder_mass(induced, &word);
            for y in probes {
                let x = pull_back_word(induced, &word, y);
                let psi_n = if state.exact {
                    word.iter().map(|&i| induced.branch_sup[i]).sum::<f64>()
                } else {
                    induced_birkhoff(induced, x, n)
                };
                if !psi_n.is_finite() {
                    continue;
                }
                let r = mass / fmath::exp(psi_n - n as f64 * p);
                lo = lo.min(r);
                hi = hi.max(r);
            }
            count += 1;
            let mut k = n;
            loop {
                if k == 0 {
                    break 'words;
                }
                k -= 1;
                word[k] += 1;
                if word[k] < b {
                    break;
                }
                word[k] = 0;
            }
        }
    }
    let k = state.gibbs_constant * (1.0 + 1e-9);
    GibbsCheck { cylinders: count, min_ratio: lo, max_ratio: hi, holds: lo >= 1.0 / k && hi <= k }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub n: usize,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailDecay {
    /// Tail reaches zero.
    Finite,
    /// `~ e^{-rate n}`.
    Exponential { rate: f64 },
    /// `~ n^{-exponent}`.
    Polynomial { exponent: f64 },
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    pub exponential_fit: Option<numeric::LineFit>,
    pub polynomial_fit: Option<numeric::LineFit>,
    pub decay: TailDecay,
}

impl TailTable {
    fn from_rows(rows: Vec<TailRow>) -> Self {
        if rows.last().is_some_and(|r| r.upper == 0.0) {
            return TailTable { rows, exponential_fit: None, polynomial_fit: None, decay: TailDecay::Finite };
        }
        let window: Vec<&TailRow> = rows[numeric::final_half(rows.len())].iter().filter(|r| r.value > 0.0 && r.n > 0).collect();
        let ns: Vec<f64> = window.iter().map(|r| r.n as f64).collect();
        let lns: Vec<f64> = window.iter().map(|r| fmath::ln(r.n as f64)).collect();
        let ys: Vec<f64> = window.iter().map(|r| fmath::ln(r.value)).collect();
        let exp_fit = numeric::fit_line(&ns, &ys);
        let pow_fit = numeric::fit_line(&lns, &ys);
        let decay = match (exp_fit, pow_fit) {
            (Some(e), Some(p)) if e.rms_residual <= p.rms_residual && e.slope < 0.0 => TailDecay::Exponential { rate: -e.slope },
            (_, Some(p)) if p.slope < 0.0 => TailDecay::Polynomial { exponent: -p.slope },
            (Some(e), None) if e.slope < 0.0 => TailDecay::Exponential { rate: -e.slope },
            _ => TailDecay::Undetermined,
        };
        TailTable { rows, exponential_fit: exp_fit, polynomial_fit: pow_fit, decay }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.decay, TailDecay::Exponential { .. } | TailDecay::Finite)
    }
}

/// Where `P_G(Psi - S tau)` switches from infinite to finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    /// `-inf` for finite schemes.
    pub value: f64,
    /// Pressure is finite at the threshold itself.
    pub finite_at: bool,
}

/// Closed-form finiteness threshold from the tail model.
pub fn finiteness_threshold(induced: &InducedPotential) -> Result<Threshold> {
    match induced.tail {
        TailModel::Finite => Ok(Threshold { value: f64::NEG_INFINITY, finite_at: true }),
        TailModel::Closed { rate, exponent, .. } => Ok(Threshold { value: rate, finite_at: exponent > 1.0 }),
        TailModel::Unknown => Err(Error::Refused("the tail of the induced potential is unknown".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminantReport {
    /// `inf {S : P_G(Psi^S) < inf}`; `-inf` when every shift is finite.
    pub p_star: f64,
    pub sweep: Vec<(f64, f64)>,
    /// `sup {P_G(Psi^S) : S > p_star}`; `+inf` when `p_star = -inf` or the pressure blows up at `p_star`.
    pub discriminant: f64,
    /// `P_G(Psi^S)` is nonincreasing along the sweep.
    pub monotone: bool,
    pub exponential_tails: bool,
    /// `discriminant > 0` agrees with `exponential_tails`.
    pub consistent: bool,
}

pub fn discriminant(induced: &InducedPotential, s_grid: &[f64]) -> Result<DiscriminantReport> {
    if s_grid.is_empty() {
        return Err(Error::InvalidParameter("empty shift grid".into()));
    }
    let mut grid = s_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let finite_at = |s: f64| full_shift_pressure(&induced.shifted(s), 1);
    let sweep: Vec<(f64, f64)> = grid.iter().map(|&s| (s, finite_at(s).value())).collect();
    let monotone = sweep.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12 || w[0].1 == f64::INFINITY);
    let first_finite = sweep.iter().position(|(_, v)| v.is_finite());
    let (p_star, discriminant) = match first_finite {
        None => {
            return Err(Error::Refused(format!(
                "pressure is infinite over the whole grid [{}, {}]",
                grid[0],
                grid[grid.len() - 1]
            )))
        }
        Some(0) => {
            let thr = finiteness_threshold(induced).ok().map(|t| t.value);
            if thr.is_some_and(|t| t > f64::NEG_INFINITY) {
                return Err(Error::Refused(format!("finiteness transition lies below the grid start {}", grid[0])));
            }
            (f64::NEG_INFINITY, f64::INFINITY)
        }
        Some(k) => {
            let (mut lo, mut hi) = (grid[k - 1], grid[k]);
            for _ in 0..200 {
                if hi - lo <= 1e-13 * (1.0 + fmath::abs(hi)) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if finite_at(mid).finite {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            // Snap to the closed-form threshold when it lies in the final bracket.
            let p_star = match finiteness_threshold(induced) {
                Ok(t) if t.value >= lo - 1e-12 && t.value <= hi + 1e-12 => t.value,
                _ => hi,
            };
            let at = full_shift_pressure(&induced.shifted(p_star), 1);
            (p_star, if at.finite { at.value() } else { f64::INFINITY })
        }
    };
    // Tails of the equilibrium state, i.e. of `Phi - P tau` at the solved pressure.
    let exponential_tails = solve_equilibrium(induced, &EquilibriumOptions::default()).is_ok_and(|eq| eq.tails.is_exponential());
    Ok(DiscriminantReport {
        p_star,
        sweep,
        discriminant,
        monotone,
        exponential_tails,
        consistent: (discriminant > 1e-12) == exponential_tails,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projectability {
    Projected,
    NotProjectable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedIntegrals {
    pub phi: f64,
    /// `h = h_ind / Lambda` with `h_ind = P_G(Psi) - int Psi dmu_Psi`.
    pub entropy: f64,
    pub lyapunov: Option<f64>,
    /// `int x dmu`.
    pub mean_x: Enclosure,
    /// `|h + int phi - P|`.
    pub free_energy_gap: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub pressure: Enclosure,
    /// The solved pressure sits at the finiteness threshold, with `P_G(Psi) < 0` there.
    pub pinned: bool,
    /// `P_G(Phi - P tau)` at the returned `P`.
    pub root_residual: f64,
    pub state: GibbsState,
    pub lambda: TailSum,
    pub tails: TailTable,
    pub integrals: Option<ProjectedIntegrals>,
    pub status: Projectability,
    /// `sum_i tau_i e^{sup Psi_i} < inf`.
    pub condition_a: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    pub tolerance: f64,
    pub depth: usize,
    pub tail_rows: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions { tolerance: 1e-13, depth: 1, tail_rows: 40 }
    }
}

/// Root of a decreasing `g` above `lo` where `g(lo) > 0`.
fn decreasing_root<G: FnMut(f64) -> f64>(mut g: G, lo: f64, tol: f64) -> Result<f64> {
    let mut step = 1.0;
    let mut hi = lo + step;
    let mut guard = 0;
    while g(hi) >= 0.0 {
        step *= 2.0;
        hi = lo + step;
        guard += 1;
        if guard > 60 {
            return Err(Error::NoConvergence("no upper bracket for the pressure root".into()));
        }
    }
    numeric::bisect(g, lo, hi, tol, 400)
}

/// Solves `P_G(Phi - P tau) = 0`, builds the Gibbs state and projects it when `Lambda < inf`.
pub fn solve_equilibrium(induced: &InducedPotential, opts: &EquilibriumOptions) -> Result<EquilibriumResult> {
    if induced.unbounded {
        return Err(Error::Refused("the induced potential is unbounded on some branch".into()));
    }
    let thr = finiteness_threshold(induced)?;
    let depth = opts.depth.max(1);
    let g_val = |p: f64| full_shift_pressure(&induced.shifted(p), depth).value();
    let g_lo = |p: f64| full_shift_pressure(&induced.shifted(p), depth).estimate.lower;
    let g_hi = |p: f64| full_shift_pressure(&induced.shifted(p), depth).estimate.upper;

    let start = if thr.value == f64::NEG_INFINITY {
        let mut lo = -1.0;
        while g_val(lo) <= 0.0 {
            lo = 2.0 * lo - 1.0;
            if lo < -1e6 {
                return Err(Error::NoConvergence("no lower bracket for the pressure root".into()));
            }
        }
        Some(lo)
    } else if thr.finite_at {
        (g_val(thr.value) > 0.0).then_some(thr.value)
    } else {
        let mut d = 1.0;
        while g_val(thr.value + d) <= 0.0 && d > 1e-300 {
            d *= 0.5;
        }
        Some(thr.value + d)
    };
    let (pressure, pinned) = match start {
        None => (Enclosure::exact(thr.value), true),
        Some(lo) => {
            let p = decreasing_root(g_val, lo, opts.tolerance)?;
            let pl = if g_lo(lo) > 0.0 { decreasing_root(g_lo, lo, opts.tolerance).unwrap_or(p) } else { lo };
            let ph = decreasing_root(g_hi, lo, opts.tolerance).unwrap_or(p);
            (Enclosure::new(pl.min(p), p, ph.max(p)), false)
        }
    };
    let p = pressure.value;
    let psi = induced.shifted(p);
    let state = gibbs_state(&psi, depth)?;
    let root_residual = state.pressure.value();
    let lambda = state.lambda();
    let tails = state.tail_table(opts.tail_rows);
    let condition_a = {
        let s: f64 = psi.branch_sup.iter().zip(psi.taus()).map(|(v, t)| t as f64 * fmath::exp(*v)).sum();
        s.is_finite() && psi.tail.sum(true).is_bounded()
    };
    let status = if lambda.is_bounded() { Projectability::Projected } else { Projectability::NotProjectable };
    let integrals = if status == Projectability::Projected { Some(project_all(induced, &psi, &state, p, lambda)?) } else { None };
    Ok(EquilibriumResult { pressure, pinned, root_residual, state, lambda, tails, integrals, status, condition_a })
}

/// `sum_{n > N} p_n Phi_n` for a closed tail, by explicit summation plus a bound on the rest.
fn tail_phi_moment(psi_tail: &TailModel, p_g: f64, p: f64) -> f64 {
    let TailModel::Closed { start, coeff_lo, coeff_hi, rate, exponent, offset } = *psi_tail else {
        return 0.0;
    };
    let c = 0.5 * (coeff_lo + coeff_hi);
    let mut acc = 0.0;
    for n in (start + 1)..(start + 200_000) {
        let nf = n as f64;
        let log_term = fmath::ln(c) + rate * nf - exponent * fmath::ln(nf + offset);
        let mass = fmath::exp(log_term - p_g);
        acc += mass * (log_term + p * nf);
        if mass < 1e-20 && nf > 2.0 * start as f64 {
            break;
        }
    }
    acc
}

fn project_all(
    induced: &InducedPotential,
    psi: &InducedPotential,
    state: &GibbsState,
    p: f64,
    lambda: TailSum,
) -> Result<ProjectedIntegrals> {
    let scheme = induced.scheme();
    let refs = induced.reference_values();
    let finite_phi: f64 = refs.iter().zip(&state.weights.weights).map(|(v, w)| v * w).sum();
    let int_phi_ind = finite_phi + tail_phi_moment(&psi.tail, state.pressure.value(), p);
    let phi = int_phi_ind / lambda.value;
    let int_psi_ind = int_phi_ind - p * lambda.value;
    let entropy = (state.pressure.value() - int_psi_ind) / lambda.value;
    let mean_x = project_integral(scheme, &state.weights, |x| x)?.value;
    let map = scheme.map();
    let base = scheme.base();
    let lyapunov = map
        .abs_deriv(0.5 * (base.lo + base.hi))
        .and_then(|_| project_integral(scheme, &state.weights, |x| map.abs_deriv(x).map_or(0.0, fmath::ln)).ok())
        .map(|e| e.value.value);
    Ok(ProjectedIntegrals { phi, entropy, lyapunov, mean_x, free_energy_gap: fmath::abs(entropy + phi - p) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub pressure: f64,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureCurve {
    pub rows: Vec<CurveRow>,
    /// Grid points where the solve failed.
    pub gaps: Vec<(f64, String)>,
    pub max_abs_d2: f64,
    /// Largest jump of the first divided difference between neighbouring cells.
    pub max_slope_jump: f64,
    pub smooth: bool,
    /// `(t, Z_0(Phi_t - h_top tau) < inf)`.
    pub z0_gate: Vec<(f64, bool)>,
    /// Fitted `eta` in `e^{-n h_top} #{tau_i = n} <= C e^{-eta n}`.
    pub count_decay: Option<f64>,
}

pub struct CurveOptions {
    pub equilibrium: EquilibriumOptions,
    /// Slope jumps above this count as non-smooth.
    pub jump_tolerance: f64,
    pub h_top: Option<f64>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { equilibrium: EquilibriumOptions::default(), jump_tolerance: 1e-3, h_top: None }
    }
}

/// Solves the equilibrium along `t_grid` for the family `t -> induced(t)`.
pub fn pressure_curve<F>(family: F, t_grid: &[f64], opts: &CurveOptions) -> PressureCurve
where
    F: Fn(f64) -> Result<InducedPotential>,
{
    let mut solved: Vec<(f64, f64)> = Vec::new();
    let mut gaps = Vec::new();
    let mut z0_gate = Vec::new();
    let mut count_decay = None;
    for &t in t_grid {
        let induced = match family(t) {
            Ok(i) => i,
            Err(e) => {
                gaps.push((t, format!("{e}")));
                continue;
            }
        };
        if let Some(h) = opts.h_top {
            z0_gate.push((t, crate::inducing::z0(&induced.shifted(h)).finite));
            if count_decay.is_none() {
                count_decay = count_decay_rate(&induced, h);
            }
        }
        match solve_equilibrium(&induced, &opts.equilibrium) {
            Ok(r) => solved.push((t, r.pressure.value)),
            Err(e) => gaps.push((t, format!("{e}"))),
        }
    }
    let mut rows: Vec<CurveRow> = solved.iter().map(|&(t, p)| CurveRow { t, pressure: p, d1: None, d2: None }).collect();
    for i in 1..rows.len().saturating_sub(1) {
        let (t0, p0) = solved[i - 1];
        let (t1, p1) = solved[i];
        let (t2, p2) = solved[i + 1];
        rows[i].d1 = Some((p2 - p0) / (t2 - t0));
        let s1 = (p1 - p0) / (t1 - t0);
        let s2 = (p2 - p1) / (t2 - t1);
        rows[i].d2 = Some(2.0 * (s2 - s1) / (t2 - t0));
    }
    let max_abs_d2 = rows.iter().filter_map(|r| r.d2).map(fmath::abs).fold(0.0, f64::max);
    let slopes: Vec<f64> = solved.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let max_slope_jump = slopes.windows(2).map(|w| fmath::abs(w[1] - w[0])).fold(0.0, f64::max);
    PressureCurve {
        smooth: gaps.is_empty() && max_slope_jump <= opts.jump_tolerance,
        rows,
        gaps,
        max_abs_d2,
        max_slope_jump,
        z0_gate,
        count_decay,
    }
}

fn count_decay_rate(induced: &InducedPotential, h_top: f64) -> Option<f64> {
    let taus = induced.taus();
    let max = *taus.iter().max()?;
    let mut counts = vec![0usize; max + 1];
    for t in taus {
        counts[t] += 1;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(n, c)| (n as f64, fmath::ln(*c as f64) - n as f64 * h_top))
        .unzip();
    numeric::fit_line(&xs, &ys).map(|f| -f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inducing::InducingScheme;
    use crate::interval_map::PiecewiseMonotoneMap;
    use crate::potential::Span;

    fn equal_branches(k: u32) -> InducingScheme {
        let f = PiecewiseMonotoneMap::full_linear(k).unwrap();
        InducingScheme::first_return(&f, Span::closed(0.0, 1.0), 1).unwrap()
    }

    #[test]
    fn equal_branches_give_log_k() {
        for k in 2..6 {
            let s = equal_branches(k);
            let ind = InducedPotential::from_values(&s, vec![0.0; k as usize], TailModel::Finite).unwrap();
            let p = full_shift_pressure(&ind, 3);
            assert!(p.exact && p.finite);
            assert!((p.value() - (k as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn two_zero_branches_give_halves() {
        let s = equal_branches(2);
        let ind = InducedPotential::from_values(&s, vec![0.0, 0.0], TailModel::Finite).unwrap();
        let g = gibbs_state(&ind, 1).unwrap();
        assert_eq!(g.weights.weights, vec![0.5, 0.5]);
        assert_eq!(g.gibbs_constant, 1.0);
        assert_eq!(g.tail_table(3).decay, TailDecay::Finite);
    }

    #[test]
    fn finite_scheme_has_no_threshold() {
        let s = equal_branches(3);
        let ind = InducedPotential::from_values(&s, vec![-1.0, 0.0, 0.5], TailModel::Finite).unwrap();
        let d = discriminant(&ind, &[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(d.p_star, f64::NEG_INFINITY);
        assert!(d.monotone);
    }

    #[test]
    fn finite_scheme_equilibrium_is_root_of_sum() {
        // tau = 1 for every branch, so P = log sum e^{Phi_i}.
        let s = equal_branches(3);
        let ind = InducedPotential::from_values(&s, vec![-1.0, 0.0, 0.5], TailModel::Finite).unwrap();
        let r = solve_equilibrium(&ind, &EquilibriumOptions::default()).unwrap();
        let expect = ((-1.0f64).exp() + 1.0 + 0.5f64.exp()).ln();
        assert!((r.pressure.value - expect).abs() < 1e-12);
        assert_eq!(r.status, Projectability::Projected);
        assert!(r.integrals.unwrap().free_energy_gap < 1e-10);
    }
}
