use serde::{Deserialize, Serialize};
use serde_json::Value;
use thermo_core::interval_map::PiecewiseMonotoneMap;
use thermo_core::potential::Potential;

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    pub potential: PotentialSpec,
    pub params: Params,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    #[default]
    Doubling,
    FullLinear {
        k: u32,
    },
    MannevillePomeau {
        alpha: f64,
    },
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        #[serde(default)]
        start: Option<f64>,
    },
}

impl MapSpec {
    pub fn build(&self) -> thermo_core::error::Result<PiecewiseMonotoneMap> {
        match self {
            MapSpec::Doubling => Ok(PiecewiseMonotoneMap::doubling()),
            MapSpec::FullLinear { k } => PiecewiseMonotoneMap::full_linear(*k),
            MapSpec::MannevillePomeau { alpha } => PiecewiseMonotoneMap::manneville_pomeau(*alpha),
            MapSpec::PiecewiseLinear { breakpoints, slopes, start } => {
                PiecewiseMonotoneMap::piecewise_linear(breakpoints, slopes, *start)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { c: f64 },
    /// Step potential with `a_k = b` before the switch index `k` and zero after.
    Hk { b: f64, k: usize },
    Step { b: f64, k: usize, gamma: f64 },
    TwoValued { b: f64 },
    /// `-t log|Df|`.
    NegLogDeriv { t: f64 },
    Mp { alpha: f64, p1: f64, p2: f64, b: f64 },
    Example1,
    Example2,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Constant { c: 0.0 }
    }
}

impl PotentialSpec {
    pub fn build(&self, map: &PiecewiseMonotoneMap) -> thermo_core::error::Result<Potential> {
        match *self {
            PotentialSpec::Constant { c } => Ok(Potential::constant(c)),
            PotentialSpec::Hk { b, k } => Potential::hk(b, k),
            PotentialSpec::Step { b, k, gamma } => Potential::step_family(b, k, gamma),
            PotentialSpec::TwoValued { b } => Ok(Potential::two_valued(b)),
            PotentialSpec::NegLogDeriv { t } => Potential::neg_log_deriv(map, t),
            PotentialSpec::Mp { alpha, p1, p2, b } => Potential::mp(alpha, p1, p2, b),
            PotentialSpec::Example1 => Ok(Potential::example1()),
            PotentialSpec::Example2 => Ok(Potential::example2()),
        }
    }
}

/// Either explicit points or `count` evenly spaced points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    fn range(start: f64, stop: f64, count: usize) -> Self {
        Grid::Range { start, stop, count }
    }

    pub fn points(&self) -> Vec<f64> {
        match *self {
            Grid::Points(ref p) => p.clone(),
            Grid::Range { count: 0, .. } => Vec::new(),
            Grid::Range { start, count: 1, .. } => vec![start],
            Grid::Range { start, stop, count } => {
                let step = (stop - start) / (count - 1) as f64;
                (0..count).map(|i| if i + 1 == count { stop } else { start + step * i as f64 }).collect()
            }
        }
    }

    fn check(&self, name: &str) -> Result<(), CliError> {
        if let Grid::Range { count: 0, .. } = self {
            return Err(CliError::Config(format!("params.{name}: count must be positive")));
        }
        let p = self.points();
        if p.is_empty() || p.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config(format!("params.{name}: grid must be nonempty and finite")));
        }
        Ok(())
    }
}

/// Weighted digraph with rational weights written as `"p/q"` strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<(usize, usize, String)>,
    pub rome: Vec<usize>,
    pub samples: Vec<String>,
}

impl Default for GraphSpec {
    /// The five-vertex graph shipped in `configs/rome5.json`.
    fn default() -> Self {
        let e = |i, j, w: &str| (i, j, w.to_string());
        GraphSpec {
            vertices: 5,
            edges: vec![
                e(0, 0, "1/3"),
                e(0, 1, "1/2"),
                e(0, 2, "3/4"),
                e(1, 0, "2"),
                e(1, 4, "2/3"),
                e(2, 1, "1/7"),
                e(2, 3, "1"),
                e(3, 1, "5/2"),
                e(4, 0, "3"),
                e(4, 2, "1/5"),
            ],
            rome: vec![0, 1],
            samples: ["2", "-1/3", "5/7", "0"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n_max: usize,
    pub cylinder: Vec<u8>,
    pub star_cylinder: Vec<u8>,
    /// Normalization for the recurrence series; `exp(P_G)` when absent.
    pub lambda: Option<f64>,
    pub base: [f64; 2],
    pub horizon: usize,
    pub tower_horizon: usize,
    pub level_cap: Option<usize>,
    pub level_r: usize,
    pub depth_k: usize,
    pub xhat_domains: Vec<usize>,
    pub xhat_prefix: Vec<u8>,
    pub depth: usize,
    pub branch_cap: usize,
    pub tail_rows: usize,
    pub tolerance: f64,
    pub fit_residual: f64,
    pub t_grid: Grid,
    pub s_grid: Grid,
    pub b_grid: Grid,
    pub k: usize,
    pub alpha_grid: Grid,
    pub mp_b_grid: Grid,
    pub n_search: usize,
    pub mp_horizon: usize,
    pub path_cap: u64,
    pub graph: GraphSpec,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n_max: 14,
            cylinder: vec![1],
            star_cylinder: vec![1],
            lambda: None,
            base: [0.5, 1.0],
            horizon: 48,
            tower_horizon: 9,
            level_cap: None,
            level_r: 6,
            depth_k: 3,
            xhat_domains: vec![0],
            xhat_prefix: vec![1],
            depth: 6,
            branch_cap: 8,
            tail_rows: 40,
            tolerance: 1e-13,
            fit_residual: 0.05,
            t_grid: Grid::range(-0.5, 0.5, 11),
            s_grid: Grid::range(-0.5, 1.5, 21),
            b_grid: Grid::range(-2.0, -0.3, 35),
            k: 2,
            alpha_grid: Grid::Points(vec![0.2, 0.3]),
            mp_b_grid: Grid::Points(vec![-1.5, -1.0]),
            n_search: 200,
            mp_horizon: 4000,
            path_cap: 10_000_000,
            graph: GraphSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Artifact path; stdout when absent.
    pub path: Option<String>,
    pub format: Format,
}

impl RunConfig {
    /// Parses `text`, applies `key.path=json` overrides and validates the result.
    pub fn resolve(text: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match text {
            Some(t) => {
                // Typed parse of the file itself, so field errors carry line and column.
                serde_json::from_str::<RunConfig>(t).map_err(|e| CliError::Config(format!("config file: {e}")))?;
                serde_json::from_str::<Value>(t).map_err(|e| CliError::Config(format!("config file: {e}")))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg = from_sections(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let p = &self.params;
        let bad = |m: &str| Err(CliError::Config(format!("params.{m}")));
        if !(p.tolerance > 0.0) {
            return bad("tolerance: must be positive");
        }
        if !(p.fit_residual > 0.0) {
            return bad("fit_residual: must be positive");
        }
        if let Some(l) = p.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad("lambda: must be positive and finite");
            }
        }
        if p.n_max == 0 {
            return bad("n_max: must be positive");
        }
        if !(p.base[0] < p.base[1]) {
            return bad("base: need lo < hi");
        }
        if p.horizon == 0 || p.mp_horizon < 2 {
            return bad("horizon: must be positive");
        }
        for (name, g) in [
            ("t_grid", &p.t_grid),
            ("s_grid", &p.s_grid),
            ("b_grid", &p.b_grid),
            ("alpha_grid", &p.alpha_grid),
            ("mp_b_grid", &p.mp_b_grid),
        ] {
            g.check(name)?;
        }
        Ok(())
    }
}

/// Deserializes each top-level section separately so errors name the section.
fn from_sections(value: Value) -> Result<RunConfig, CliError> {
    let Value::Object(mut obj) = value else {
        return Err(CliError::Config("config must be a JSON object".into()));
    };
    fn take<T: serde::de::DeserializeOwned + Default>(
        obj: &mut serde_json::Map<String, Value>,
        key: &str,
    ) -> Result<T, CliError> {
        match obj.remove(key) {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v).map_err(|e| CliError::Config(format!("{key}: {e}"))),
        }
    }
    let cfg = RunConfig {
        map: take(&mut obj, "map")?,
        potential: take(&mut obj, "potential")?,
        params: take(&mut obj, "params")?,
        output: take(&mut obj, "output")?,
    };
    if let Some(k) = obj.keys().next() {
        return Err(CliError::Config(format!("unknown top-level field `{k}`")));
    }
    Ok(cfg)
}

/// `a.b.c=<json>`; a value that is not valid JSON is taken as a string.
fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) =
        spec.split_once('=').ok_or_else(|| CliError::Config(format!("--set {spec}: expected key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("--set {spec}: empty key")));
    }
    let mut cur = root;
    for k in &keys[..keys.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("--set {spec}: `{k}` is not inside an object")))?;
        cur = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| CliError::Config(format!("--set {spec}: parent is not an object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let e = RunConfig::resolve(Some("{\n  \"params\": {\"nmax\": 3}\n}"), &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("nmax") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::resolve(None, &["params.n_max=9".into(), "map.family=full_linear".into(), "map.k=3".into()])
            .unwrap();
        assert_eq!(cfg.params.n_max, 9);
        assert!(matches!(cfg.map, MapSpec::FullLinear { k: 3 }));
    }

    #[test]
    fn override_errors_name_the_section() {
        let e = RunConfig::resolve(None, &["potential.kind=bogus".into()]).unwrap_err();
        assert!(e.to_string().starts_with("config: potential:"), "{e}");
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        assert!(RunConfig::resolve(None, &["params.tolerance=0".into()]).is_err());
    }

    #[test]
    fn range_grid_hits_both_ends() {
        let g = Grid::range(-2.0, -0.3, 35).points();
        assert_eq!(g.len(), 35);
        assert_eq!((g[0], g[34]), (-2.0, -0.3));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::resolve(None, &["potential={\"kind\":\"hk\",\"b\":-0.5,\"k\":2}".into()]).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again = RunConfig::resolve(Some(&text), &[]).unwrap();
        assert_eq!(text, serde_json::to_string_pretty(&again).unwrap());
    }
}
