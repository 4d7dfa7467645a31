use clap::ValueEnum;
use num_rational::BigRational;
use serde_json::{json, Value};

use thermo_core::examples::{hk_phase, hk_phase_scan, mp_scan, StepFamily};
use thermo_core::gibbs::{
    discriminant, gibbs_check, pressure_curve, solve_equilibrium, CurveOptions, EquilibriumOptions, EquilibriumResult,
    TailDecay,
};
use thermo_core::hofbauer::TowerGraph;
use thermo_core::inducing::{induced_potential, InducedPotential, InducingScheme, TailModel};
use thermo_core::interval_map::PiecewiseMonotoneMap;
use thermo_core::potential::{Potential, Span};
use thermo_core::pressure::{
    gurevich_pressure, log_z_n, log_z_n_star, log_z_top, p_top, recurrence_classify, DivergencePolicy,
};
use thermo_core::rome::{
    characteristic_identity_check, rome_matrix, spectral_radius, tail_gap, verify_rome, LiftedSet, WeightedDigraph,
};

use crate::config::{MapSpec, Params, PotentialSpec, RunConfig};
use crate::output::{num, opt, word, Artifact};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Entropy,
    Pressure,
    Gurevich,
    Recurrence,
    Tower,
    RomeCheck,
    Induce,
    Gibbs,
    Equilibrium,
    PressureCurve,
    PhaseScan,
    MpScan,
    TailGap,
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Artifact, CliError> {
    let p = &cfg.params;
    match cmd {
        Command::Entropy => entropy(&cfg.map.build()?, p),
        Command::Pressure => pressure(cfg),
        Command::Gurevich => gurevich(cfg),
        Command::Recurrence => recurrence(cfg),
        Command::Tower => tower(&cfg.map.build()?, p),
        Command::RomeCheck => rome_check(p),
        Command::Induce => induce(cfg),
        Command::Gibbs => gibbs(cfg),
        Command::Equilibrium => equilibrium(cfg),
        Command::PressureCurve => curve(cfg),
        Command::PhaseScan => phase_scan(p),
        Command::MpScan => mp(p),
        Command::TailGap => gap(cfg),
    }
}

fn setup(cfg: &RunConfig) -> Result<(PiecewiseMonotoneMap, Potential), CliError> {
    let map = cfg.map.build()?;
    let phi = cfg.potential.build(&map)?;
    Ok((map, phi))
}

fn uses_half_scheme(cfg: &RunConfig) -> bool {
    matches!(cfg.map, MapSpec::Doubling) && cfg.params.base == [0.5, 1.0]
}

fn scheme(cfg: &RunConfig, map: &PiecewiseMonotoneMap) -> Result<InducingScheme, CliError> {
    let p = &cfg.params;
    Ok(if uses_half_scheme(cfg) {
        InducingScheme::doubling_half(p.horizon)?
    } else {
        InducingScheme::first_return(map, Span::closed(p.base[0], p.base[1]), p.horizon)?
    })
}

/// Step potentials over the doubling scheme on `(1/2, 1]` use their closed-form lift and tail.
fn induced(cfg: &RunConfig, map: &PiecewiseMonotoneMap, phi: &Potential) -> Result<InducedPotential, CliError> {
    let h = cfg.params.horizon;
    if uses_half_scheme(cfg) {
        let family = match cfg.potential {
            PotentialSpec::Hk { b, k } => Some(StepFamily::hk(b, k)?),
            PotentialSpec::Step { b, k, gamma } => Some(StepFamily::new(b, Some(k), gamma)?),
            PotentialSpec::TwoValued { b } => Some(StepFamily::two_valued(b)?),
            _ => None,
        };
        if let Some(f) = family {
            return Ok(f.induced(h)?);
        }
    }
    Ok(induced_potential(phi, &scheme(cfg, map)?)?)
}

fn equilibrium_options(p: &Params) -> EquilibriumOptions {
    EquilibriumOptions { tolerance: p.tolerance, tail_rows: p.tail_rows, ..EquilibriumOptions::default() }
}

fn entropy(map: &PiecewiseMonotoneMap, p: &Params) -> Result<Artifact, CliError> {
    let h = map.topological_entropy(p.n_max)?;
    let laps = map.lap_numbers(p.n_max)?;
    let mut a = Artifact::new(&["n", "laps", "log_laps_over_n"]);
    for (i, l) in laps.iter().enumerate() {
        a.row(vec![(i + 1).into(), (*l).into(), num((*l as f64).ln() / (i + 1) as f64)]);
    }
    a.note("map", map.name());
    a.note("h_top", num(h.value));
    a.note("h_top_lower", num(h.lower));
    a.note("h_top_upper", num(h.upper));
    Ok(a)
}

fn pressure(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let (map, phi) = setup(cfg)?;
    let n_max = cfg.params.n_max;
    let est = p_top(&map, &phi, n_max)?;
    let mut a = Artifact::new(&["n", "log_z_lower", "log_z", "estimate"]);
    for n in 1..=n_max {
        let e = log_z_top(&map, &phi, n)?;
        a.row(vec![n.into(), num(e.lower), num(e.value), num(e.value / n as f64)]);
    }
    a.note("potential", phi.name());
    a.note("p_top", num(est.value));
    a.note("p_top_lower", num(est.lower));
    a.note("p_top_upper", num(est.upper));
    Ok(a)
}

fn gurevich(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let (map, phi) = setup(cfg)?;
    let p = &cfg.params;
    let est = gurevich_pressure(&map, &phi, &p.cylinder, p.n_max)?;
    let mut a = Artifact::new(&["n", "z_n", "z_n_star", "partial_sum", "estimate"]);
    let mut partial = 0.0;
    for n in 1..=p.n_max {
        let lz = log_z_n(&map, &phi, &p.cylinder, n)?;
        let lzs = log_z_n_star(&map, &phi, &p.cylinder, n)?;
        partial += lz.exp();
        a.row(vec![n.into(), num(lz.exp()), num(lzs.exp()), num(partial), num(lz / n as f64)]);
    }
    a.note("cylinder", word(&p.cylinder));
    a.note("p_gurevich", num(est.value));
    a.note("p_gurevich_lower", num(est.lower));
    a.note("p_gurevich_upper", num(est.upper));
    Ok(a)
}

fn recurrence(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let (map, phi) = setup(cfg)?;
    let p = &cfg.params;
    let lambda = match p.lambda {
        Some(l) => l,
        None => gurevich_pressure(&map, &phi, &p.cylinder, p.n_max)?.value.exp(),
    };
    let policy = DivergencePolicy { residual: p.fit_residual, ..DivergencePolicy::default() };
    let rep = recurrence_classify(&map, &phi, &p.cylinder, &p.star_cylinder, lambda, p.n_max, &policy)?;
    let mut a = Artifact::new(&["n", "partial_sum", "weighted_star_sum"]);
    for (i, (s, w)) in rep.partial_sums.iter().zip(&rep.weighted_star_sums).enumerate() {
        a.row(vec![(i + 1).into(), num(*s), num(*w)]);
    }
    a.note("lambda", num(lambda));
    a.note("class", format!("{:?}", rep.class));
    a.note("recurrence_series", format!("{:?}", rep.recurrence));
    a.note("return_time_series", format!("{:?}", rep.return_time));
    Ok(a)
}

fn tower(map: &PiecewiseMonotoneMap, p: &Params) -> Result<Artifact, CliError> {
    let t = TowerGraph::build(map, p.tower_horizon, p.level_cap.unwrap_or(usize::MAX))?;
    let mut a = Artifact::new(&[
        "from", "to", "branch", "from_level", "to_level", "from_lo", "from_hi", "to_lo", "to_hi", "transition_lo",
        "transition_hi",
    ]);
    for e in &t.arrows {
        let (f, d) = (&t.domains[e.from], &t.domains[e.to]);
        a.row(vec![
            e.from.into(),
            e.to.into(),
            e.branch.into(),
            f.level.into(),
            d.level.into(),
            num(f.lo()),
            num(f.hi()),
            num(d.lo()),
            num(d.hi()),
            num(e.transition.0),
            num(e.transition.1),
        ]);
    }
    let domains: Vec<Value> = t
        .domains
        .iter()
        .map(|d| json!({"id": d.id, "level": d.level, "lo": num(d.lo()), "hi": num(d.hi()), "word": word(&d.word)}))
        .collect();
    a.extra.insert("domains".into(), domains.into());
    a.note("domains", t.domains.len());
    a.note("arrows", t.arrows.len());
    a.note("max_level", t.max_level());
    a.note("warnings", t.warnings.len());
    Ok(a)
}

fn rational(s: &str) -> Result<BigRational, CliError> {
    s.trim().parse().map_err(|_| CliError::Config(format!("params.graph: `{s}` is not a rational number")))
}

fn rome_check(p: &Params) -> Result<Artifact, CliError> {
    let g = &p.graph;
    let edges =
        g.edges.iter().map(|(i, j, w)| Ok((*i, *j, rational(w)?))).collect::<Result<Vec<_>, CliError>>()?;
    let exact = WeightedDigraph::from_edges(g.vertices, edges)?;
    let xs = g.samples.iter().map(|s| rational(s)).collect::<Result<Vec<_>, _>>()?;
    if !verify_rome(&exact, &g.rome) {
        return Err(CliError::Config(format!("params.graph.rome: {:?} is not a rome of the graph", g.rome)));
    }
    let rep = characteristic_identity_check(&exact, &g.rome, &xs)?;
    let mut a = Artifact::new(&["x", "lhs", "rhs", "residual", "skipped"]);
    for (s, r) in rep.samples.iter().zip(rep.residuals()) {
        a.row(vec![s.x.to_string().into(), s.lhs.to_string().into(), s.rhs.to_string().into(), r.to_string().into(), s.skipped.into()]);
    }

    let approx = exact.map_weights(to_f64);
    let spec = spectral_radius(&approx)?;
    let rm = rome_matrix(&approx, &g.rome, p.path_cap as u128)?;
    let at_rho = rm.eval(&spec.rho);
    let rome_spec = spectral_radius(&WeightedDigraph::from_matrix(&at_rho)?)?;
    a.extra.insert("left_vector".into(), spec.left_vector.iter().map(|v| num(*v)).collect::<Vec<_>>().into());
    a.note("identity_holds", rep.holds());
    a.note("graph_size", rep.graph_size);
    a.note("rome_size", rep.rome_size);
    a.note("rho", num(spec.rho));
    a.note("rho_residual", num(spec.residual));
    a.note("rome_rho_at_rho", num(rome_spec.rho));
    Ok(a)
}

fn to_f64(r: &BigRational) -> f64 {
    let (n, d) = (r.numer().to_string(), r.denom().to_string());
    n.parse::<f64>().unwrap_or(f64::NAN) / d.parse::<f64>().unwrap_or(f64::NAN)
}

fn induce(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let (map, phi) = setup(cfg)?;
    let ind = induced(cfg, &map, &phi)?;
    let s = ind.scheme();
    let mut a = Artifact::new(&["i", "lo", "hi", "tau", "sup", "inf"]);
    for (i, b) in s.branches().iter().enumerate() {
        a.row(vec![i.into(), num(b.lo()), num(b.hi()), b.tau.into(), num(ind.branch_sup[i]), num(ind.branch_inf[i])]);
    }
    a.note("branches", s.branches().len());
    a.note("horizon", s.horizon());
    a.note("uncovered", num(s.uncovered()));
    a.note("tail", tail_name(&ind.tail));
    for (i, d) in s.diagnostics().iter().enumerate() {
        a.note(&format!("diagnostic_{i}"), d.as_str());
    }
    Ok(a)
}

fn tail_name(t: &TailModel) -> String {
    match t {
        TailModel::Finite => "finite".into(),
        TailModel::Closed { rate, exponent, .. } => format!("closed(rate {rate}, exponent {exponent})"),
        TailModel::Unknown => "unknown".into(),
    }
}

fn decay_name(d: &TailDecay) -> String {
    match d {
        TailDecay::Finite => "finite".into(),
        TailDecay::Exponential { rate } => format!("exponential({rate})"),
        TailDecay::Polynomial { exponent } => format!("polynomial({exponent})"),
        TailDecay::Undetermined => "undetermined".into(),
    }
}

fn solve(cfg: &RunConfig) -> Result<(InducedPotential, EquilibriumResult), CliError> {
    let (map, phi) = setup(cfg)?;
    let ind = induced(cfg, &map, &phi)?;
    let eq = solve_equilibrium(&ind, &equilibrium_options(&cfg.params))?;
    Ok((ind, eq))
}

fn note_equilibrium(a: &mut Artifact, eq: &EquilibriumResult) {
    a.note("pressure", num(eq.pressure.value));
    a.note("pressure_lower", num(eq.pressure.lower));
    a.note("pressure_upper", num(eq.pressure.upper));
    a.note("pinned", eq.pinned);
    a.note("status", format!("{:?}", eq.status));
    a.note("mean_return_time", num(if eq.lambda.divergent { f64::INFINITY } else { eq.lambda.value }));
    a.note("tail_decay", decay_name(&eq.tails.decay));
}

fn gibbs(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let p = &cfg.params;
    let (ind, eq) = solve(cfg)?;
    let psi = ind.shifted(eq.pressure.value);
    let c = gibbs_check(&eq.state, &psi, p.depth, p.branch_cap);
    let mut a = Artifact::new(&["n", "lower", "tail", "upper"]);
    for r in &eq.tails.rows {
        a.row(vec![r.n.into(), num(r.lower), num(r.value), num(r.upper)]);
    }
    note_equilibrium(&mut a, &eq);
    a.note("gibbs_constant", num(eq.state.gibbs_constant));
    a.note("cylinders_checked", c.cylinders);
    a.note("min_ratio", num(c.min_ratio));
    a.note("max_ratio", num(c.max_ratio));
    a.note("gibbs_holds", c.holds);
    Ok(a)
}

fn equilibrium(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let (ind, eq) = solve(cfg)?;
    let d = discriminant(&ind, &cfg.params.s_grid.points())?;
    let mut a = Artifact::new(&["s", "shift_pressure"]);
    for (s, v) in &d.sweep {
        a.row(vec![num(*s), num(*v)]);
    }
    note_equilibrium(&mut a, &eq);
    if let Some(i) = &eq.integrals {
        a.note("entropy", num(i.entropy));
        a.note("integral_phi", num(i.phi));
        a.note("lyapunov", opt(i.lyapunov));
        a.note("mean_x", num(i.mean_x.value));
        a.note("free_energy_gap", num(i.free_energy_gap));
    }
    a.note("threshold", num(d.p_star));
    a.note("discriminant", num(d.discriminant));
    a.note("exponential_tails", d.exponential_tails);
    a.note("discriminant_consistent", d.consistent);
    Ok(a)
}

fn curve(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let map = cfg.map.build()?;
    let s = scheme(cfg, &map)?;
    let grid = cfg.params.t_grid.points();
    let family = |t: f64| induced_potential(&Potential::neg_log_deriv(&map, t)?, &s);
    let opts = CurveOptions { equilibrium: equilibrium_options(&cfg.params), ..CurveOptions::default() };
    let c = pressure_curve(family, &grid, &opts);
    let mut a = Artifact::new(&["t", "pressure", "d1", "d2"]);
    for r in &c.rows {
        a.row(vec![num(r.t), num(r.pressure), opt(r.d1), opt(r.d2)]);
    }
    a.note("max_abs_d2", num(c.max_abs_d2));
    a.note("max_slope_jump", num(c.max_slope_jump));
    a.note("smooth", c.smooth);
    a.note("gaps", c.gaps.len());
    for (t, why) in &c.gaps {
        a.note(&format!("gap_{t}"), why.as_str());
    }
    Ok(a)
}

fn phase_scan(p: &Params) -> Result<Artifact, CliError> {
    let scan = hk_phase_scan(p.k, &p.b_grid.points())?;
    let mut a = Artifact::new(&[
        "kind",
        "b",
        "b_hi",
        "series_lower",
        "series",
        "series_upper",
        "region",
        "pressure_positive",
        "gibbs",
        "unique",
    ]);
    let mut push = |kind: &str, b: f64, b_hi: Value, r: &thermo_core::examples::PhaseRow| {
        a.row(vec![
            kind.into(),
            num(b),
            b_hi,
            num(r.series.lower),
            num(r.series.value),
            num(r.series.upper),
            r.region.name().into(),
            r.pressure_positive.into(),
            r.gibbs.into(),
            r.unique.into(),
        ]);
    };
    for (b, r) in &scan.rows {
        push("sample", *b, Value::Null, r);
    }
    let crit = hk_phase(&StepFamily::hk(scan.critical.b, p.k)?)?;
    for (lo, hi) in &scan.boundaries {
        push("boundary", *lo, num(*hi), &crit);
    }
    push("critical", scan.critical.b, Value::Null, &crit);
    a.note("k", p.k);
    a.note("b_critical", num(scan.critical.b));
    a.note("critical_residual", num(scan.critical.residual));
    a.note("boundaries", scan.boundaries.len());
    Ok(a)
}

fn mp(p: &Params) -> Result<Artifact, CliError> {
    let rows = mp_scan(&p.alpha_grid.points(), &p.mp_b_grid.points(), p.n_search, p.mp_horizon);
    let mut a = Artifact::new(&["alpha", "b", "n_flat", "p1", "p2", "series_upper", "status"]);
    for r in &rows {
        let c = r.config.as_ref();
        a.row(vec![
            num(r.alpha),
            num(r.b),
            c.map(|c| c.n_flat.into()).unwrap_or(Value::Null),
            opt(c.map(|c| c.p1)),
            opt(c.map(|c| c.p2)),
            opt(c.map(|c| c.series.upper)),
            r.status.map(|s| format!("{s:?}").into()).unwrap_or(Value::Null),
        ]);
    }
    a.note("rows", rows.len());
    a.note("configured", rows.iter().filter(|r| r.config.is_some()).count());
    Ok(a)
}

fn gap(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let (map, phi) = setup(cfg)?;
    let p = &cfg.params;
    let tower = TowerGraph::build(&map, p.tower_horizon, p.level_cap.unwrap_or(usize::MAX))?;
    let xhat = LiftedSet { domains: p.xhat_domains.clone(), prefix: p.xhat_prefix.clone() };
    let rep = tail_gap(&map, &phi, &tower, &xhat, p.level_r, p.depth_k)?;
    let mut a = Artifact::new(&["vertex", "domain", "word", "lo", "hi", "in_xhat"]);
    for (i, v) in rep.vertices.iter().enumerate() {
        a.row(vec![i.into(), v.domain.into(), word(&v.word).into(), num(v.lo), num(v.hi), v.in_xhat.into()]);
    }
    a.note("rho_0", num(rep.rho_0));
    a.note("rho_1", num(rep.rho_1));
    a.note("gap", num(rep.gamma));
    a.note("rho_rome", num(rep.rho_rome));
    a.note("distortion", num(rep.distortion));
    a.note("h_top", num(rep.h_top));
    a.note("h_star", num(rep.h_star));
    a.note("margin", num(rep.margin));
    a.note("separated", rep.separated);
    a.note("g0_size", rep.g0_size);
    a.note("g1_size", rep.g1_size);
    a.note("rome_of_g0", rep.rome_of_g0);
    a.note("rome_of_g1", rep.rome_of_g1);
    Ok(a)
}
