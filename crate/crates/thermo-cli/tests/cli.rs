use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const B2: f64 = -0.896_287_519_330_047;

fn thermo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermo")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

/// `key: value` lines printed by a run that writes its artifact to a file.
fn summary(out: &Output, key: &str) -> String {
    let text = String::from_utf8_lossy(&out.stdout);
    let prefix = format!("{key}: ");
    text.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("no `{key}` in {text}")).to_string()
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> (Output, PathBuf) {
    let path = dir.join(name);
    let mut all = args.to_vec();
    let p = path.display().to_string();
    all.extend(["-o", &p]);
    let out = thermo(&all);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    (out, path)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn entropy_of_doubling_is_log_two() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_to(dir.path(), "h.csv", &["entropy", "-c", &config("doubling_entropy.json")]);
    let h: f64 = summary(&out, "h_top").parse().unwrap();
    assert!((h - std::f64::consts::LN_2).abs() <= 1e-12);
    let (_, rows) = read_csv(&path);
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[15][1], "65536");
}

#[test]
fn phase_scan_emits_the_critical_row() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_to(dir.path(), "phase.csv", &["phase-scan", "-c", &config("phase_scan_k2.json")]);
    let (_, rows) = read_csv(&path);
    let critical: Vec<_> = rows.iter().filter(|r| r[0] == "critical").collect();
    assert_eq!(critical.len(), 1);
    assert!((critical[0][1].parse::<f64>().unwrap() - B2).abs() < 1e-12);
    assert!(critical[0][6].starts_with("critical"));
    let boundary = rows.iter().find(|r| r[0] == "boundary").expect("boundary row");
    let (lo, hi): (f64, f64) = (boundary[1].parse().unwrap(), boundary[2].parse().unwrap());
    assert!(lo < B2 && B2 < hi);
    assert_eq!(rows.iter().filter(|r| r[0] == "sample").count(), 35);
    assert!((summary(&out, "b_critical").parse::<f64>().unwrap() - B2).abs() < 1e-12);
}

#[test]
fn shipped_rome_graph_has_zero_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_to(dir.path(), "rome.csv", &["rome-check", "-c", &config("rome5.json")]);
    let (_, rows) = read_csv(&path);
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(r[3], "0");
        if r[4] == "false" {
            assert_eq!(r[1], r[2]);
        }
    }
    assert_eq!(summary(&out, "identity_holds"), "true");
    let rho: f64 = summary(&out, "rho").parse().unwrap();
    let rome_rho: f64 = summary(&out, "rome_rho_at_rho").parse().unwrap();
    assert!((rho - rome_rho).abs() < 1e-9 * rho);
}

#[test]
fn headers_match_the_documented_columns() {
    let cheap = ["--set", "params.n_max=6"];
    let cases: &[(&str, &[&str], &str)] = &[
        ("entropy", &cheap, "n,laps,log_laps_over_n"),
        ("pressure", &cheap, "n,log_z_lower,log_z,estimate"),
        ("gurevich", &cheap, "n,z_n,z_n_star,partial_sum,estimate"),
        ("recurrence", &cheap, "n,partial_sum,weighted_star_sum"),
        (
            "tower",
            &["--set", "map={\"family\":\"piecewise_linear\",\"breakpoints\":[0,0.5,1],\"slopes\":[1.8,-1.8]}"],
            "from,to,branch,from_level,to_level,from_lo,from_hi,to_lo,to_hi,transition_lo,transition_hi",
        ),
        ("rome-check", &[], "x,lhs,rhs,residual,skipped"),
        ("induce", &[], "i,lo,hi,tau,sup,inf"),
        ("gibbs", &["--set", "params.depth=2"], "n,lower,tail,upper"),
        ("equilibrium", &[], "s,shift_pressure"),
        ("pressure-curve", &["--set", "params.t_grid=[0,0.5,1]"], "t,pressure,d1,d2"),
        ("phase-scan", &["--set", "params.b_grid=[-1,-0.5]"], "kind,b,b_hi,series_lower,series,series_upper,region,pressure_positive,gibbs,unique"),
        (
            "mp-scan",
            &["--set", "params.alpha_grid=[0.3]", "--set", "params.mp_b_grid=[-1]", "--set", "params.mp_horizon=600"],
            "alpha,b,n_flat,p1,p2,series_upper,status",
        ),
        ("tail-gap", &["-c", "TAIL"], "vertex,domain,word,lo,hi,in_xhat"),
    ];
    let tail = config("tail_gap.json");
    for (cmd, extra, header) in cases {
        let mut args = vec![*cmd];
        args.extend(extra.iter().map(|a| if *a == "TAIL" { tail.as_str() } else { a }));
        let out = thermo(&args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let first = String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").to_string();
        assert_eq!(first, *header, "{cmd}");
    }
}

#[test]
fn echoed_config_reproduces_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gibbs", "-c", &config("hk_equilibrium.json"), "--set", "params.depth=3"];
    let (_, first) = run_to(dir.path(), "a.csv", &args);
    let echo = dir.path().join("a.csv.config.json");
    assert!(echo.exists());
    let echo_s = echo.display().to_string();
    let (_, second) = run_to(dir.path(), "b.csv", &["gibbs", "-c", &echo_s]);
    assert_eq!(std::fs::read(first).unwrap(), std::fs::read(second).unwrap());
    // The echo of the echo is a fixed point.
    let again = std::fs::read_to_string(dir.path().join("b.csv.config.json")).unwrap();
    let original: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&echo).unwrap()).unwrap();
    let mut reechoed: serde_json::Value = serde_json::from_str(&again).unwrap();
    reechoed["output"]["path"] = original["output"]["path"].clone();
    assert_eq!(original, reechoed);
}

#[test]
fn json_output_carries_config_summary_and_rows() {
    let out = thermo(&["equilibrium", "-c", &config("hk_equilibrium.json"), "-f", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["config"]["potential"]["kind"], "hk");
    assert_eq!(doc["summary"]["status"], "Projected");
    let p = doc["summary"]["pressure"].as_f64().unwrap();
    assert!((p - 0.204_331).abs() < 1e-6);
    assert_eq!(doc["columns"][0], "s");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 21);
}

#[test]
fn not_projectable_is_a_successful_verdict() {
    let out = thermo(&["equilibrium", "--set", "potential={\"kind\":\"hk\",\"b\":-1.2,\"k\":2}", "-f", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["summary"]["status"], "NotProjectable");
    assert_eq!(doc["summary"]["pinned"], true);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"params\": {\n    \"n_mx\": 4\n  }\n}\n").unwrap();
    let out = thermo(&["entropy", "-c", &bad.display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_mx") && err.contains("line 3"), "{err}");

    for set in ["params.tolerance=-1", "map.family=tent", "nonsense=1", "params.b_grid=[]"] {
        let out = thermo(&["phase-scan", "--set", set]);
        assert_eq!(out.status.code(), Some(2), "{set}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(thermo(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn refusals_exit_with_three() {
    // sup - inf = 5 exceeds the entropy of the doubling map.
    let out = thermo(&["tail-gap", "--set", "potential={\"kind\":\"hk\",\"b\":-5,\"k\":2}"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refused"));
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_thermo"))
        .args(["entropy", "--set", "params.n_max=4", "-o", "nested/h.csv"])
        .env("THERMO_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("nested/h.csv").exists());
    assert!(dir.path().join("nested/h.csv.config.json").exists());
}
