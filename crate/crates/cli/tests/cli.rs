use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MARRIAGE: &str = r#"schema_version = 1
m = 4
p = 1
T = [[-0.95, 0.95, 0.0, 0.0], [0.0, -0.37, 0.25, 0.05], [0.0, 0.0, -0.6, 0.1], [0.0, 0.85, 0.0, -0.85]]
D = [[0.0], [0.07], [0.5], [0.0]]
pi = [0.5, 0.3, 0.1, 0.1]
psi = [0.25, 0.25, 0.25, 0.25]
s0 = [0.5, 0.5, 0.5, 0.5]
labels = ["N", "M", "S", "W", "D"]
"#;

fn gph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gph(args);
    assert!(
        out.status.success(),
        "gph {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn model(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header and numeric rows of a CSV, metadata skipped.
fn table(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k]).collect()
}

#[test]
fn validate_accepts_the_marriage_model() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let out = ok(&["validate", "--model", s(&f)]);
    assert!(out.contains("m = 4, p = 1"), "{out}");
    assert!(out.contains("dominant real part of Psi T: -0.0539456845"), "{out}");
    assert!(out.trim_end().ends_with("valid"), "{out}");
}

#[test]
fn validate_reports_row_sum_field() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "bad.toml", &MARRIAGE.replace("[[0.0], [0.07]", "[[0.0], [0.08]"));
    let out = gph(&["validate", "--model", s(&f)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("sum to zero"), "{err}");
}

#[test]
fn validate_warns_on_zero_speed() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "z.toml", &MARRIAGE.replace("psi = [0.25, 0.25", "psi = [0.0, 0.25"));
    let out = ok(&["validate", "--model", s(&f)]);
    assert!(out.contains("warning: psi is zero in state(s) N"), "{out}");
    assert!(out.contains("residual lifetime") && out.contains("moments"), "{out}");
    assert!(out.trim_end().ends_with("valid"));
}

#[test]
fn schema_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "x.toml", &MARRIAGE.replace("pi = [0.5, 0.3, 0.1, 0.1]", "pi = [0.5, 0.3]"));
    let err = String::from_utf8(gph(&["validate", "--model", s(&f)]).stderr).unwrap();
    assert!(err.contains("field `pi`"), "{err}");
}

#[test]
fn eval_survival_header_lists_anchors() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let out = ok(&[
        "eval", "--model", s(&f), "--quantity", "survival", "--state", "M", "--age", "0.01,4,10", "--grid", "0:20:0.1",
    ]);
    let (header, rows) = table(&out);
    assert_eq!(header.join(","), "s,duration,value_t0.01,value_t4,value_t10");
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[0][2..], [1.0, 1.0, 1.0]);
    assert!(out.contains("# model_sha256: "));
    for col in ["value_t0.01", "value_t4", "value_t10"] {
        let v = column(&header, &rows, col);
        assert!(v.windows(2).all(|w| w[1] <= w[0]), "{col} not decreasing");
    }
}

#[test]
fn baseline_matches_forward_intensity_from_initial_law() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "h.toml", &MARRIAGE.replace("0.25, 0.25, 0.25, 0.25", "1.0, 1.0, 1.0, 1.0"));
    let (_, base) = table(&ok(&["eval", "--model", s(&f), "--quantity", "baseline", "--grid", "0:30:0.5"]));
    let (_, fwd) = table(&ok(&[
        "eval", "--model", s(&f), "--quantity", "forward-intensity", "--info", "initial", "--grid", "0:30:0.5",
    ]));
    assert_eq!(base.len(), fwd.len());
    for (b, w) in base.iter().zip(&fwd) {
        assert_eq!(b[0], w[1]);
        assert_eq!(b[1], w[2]);
    }
}

#[test]
fn forward_intensity_tail_reaches_long_run_rate_0_0644() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let out = ok(&[
        "eval", "--model", s(&f), "--quantity", "forward-intensity", "--state", "M", "--age", "0.01,4,10", "--grid",
        "0:60:1",
    ]);
    let (_, rows) = table(&out);
    let tail = rows.last().unwrap();
    assert_eq!(tail[1], 60.0);
    for v in &tail[2..] {
        assert!((v - 0.0644).abs() <= 1e-3, "tail {v} vs 0.0644");
    }
}

#[test]
fn incompatible_flags_are_rejected() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let m = s(&f);
    for args in [
        vec!["eval", "--model", m, "--quantity", "sub-dist", "--state", "M", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "survival", "--state", "M", "--cause", "1", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "occupation", "--state", "M", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "residual", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "residual", "--state", "M", "--age", "3", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "survival", "--info", "current", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "survival", "--state", "M", "--info", "bogus", "--grid", "0:1:1"],
        vec!["eval", "--model", m, "--quantity", "survival", "--state", "M", "--grid", "0:1"],
    ] {
        let out = gph(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error"), "{args:?}");
    }
}

#[test]
fn path_information_anchors_at_elapsed_time() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let path = dir.path().join("one.txt");
    fs::write(&path, "# observed\nG;1:2.5,2:1.5\n").unwrap();
    let out = ok(&[
        "eval", "--model", s(&f), "--quantity", "survival", "--info", "path", s(&path), "--grid", "0:2:1",
    ]);
    let (header, rows) = table(&out);
    assert_eq!(header.join(","), "s,duration,value_t4");
    assert_eq!(rows[0], [4.0, 0.0, 1.0]);
    assert!(out.contains("# state: M"));
}

#[test]
fn simulate_is_deterministic_under_seed() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let args = ["simulate", "--model", s(&f), "--paths", "200", "--seed", "42", "--horizon", "50"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert!(a.contains("# seed: 42"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 200);
    let other = ok(&["simulate", "--model", s(&f), "--paths", "200", "--seed", "43", "--horizon", "50"]);
    assert_ne!(a.lines().last(), other.lines().last());
}

#[test]
fn simulate_then_estimate_recovers_entry_rate() {
    let dir = TempDir::new().unwrap();
    let f = model(&dir, "m.toml", MARRIAGE);
    let paths = dir.path().join("paths.txt");
    ok(&[
        "simulate", "--model", s(&f), "--paths", "10000", "--seed", "42", "--horizon", "200", "--out", s(&paths),
    ]);
    let report = ok(&["estimate", s(&paths)]);
    let line = report
        .lines()
        .find(|l| l.starts_with("q,1,2,"))
        .unwrap_or_else(|| panic!("{report}"));
    let fields: Vec<f64> = line.split(',').skip(3).map(|v| v.parse().unwrap()).collect();
    let (q, se) = (fields[0], fields[1]);
    assert!(se > 0.0);
    assert!((q - 0.95).abs() <= 3.0 * se, "q12 = {q} +- {se}");
    let psi = report.lines().find(|l| l.starts_with("psi,2,2,")).unwrap();
    let v: f64 = psi.split(',').nth(3).unwrap().parse().unwrap();
    assert!((v - 0.25).abs() < 0.05, "{psi}");
}

#[test]
fn estimate_rejects_empty_input() {
    let dir = TempDir::new().unwrap();
    let empty = model(&dir, "empty.txt", "# nothing here\n\n");
    let out = gph(&["estimate", s(&empty)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no paths"));
}

fn bundle(variant: &str) -> (TempDir, String) {
    let dir = TempDir::new().unwrap();
    let out = ok(&["example-marriage", "--variant", variant, "--out-dir", s(dir.path())]);
    (dir, out)
}

fn read_table(dir: &TempDir, name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    table(&fs::read_to_string(dir.path().join(name)).unwrap())
}

#[test]
fn homogeneous_forward_intensity_ignores_age() {
    let (dir, _) = bundle("single");
    let (header, rows) = read_table(&dir, "forward_intensity_homogeneous.csv");
    let a = column(&header, &rows, "value_t0.01");
    for col in ["value_t4", "value_t10"] {
        for (x, y) in a.iter().zip(column(&header, &rows, col)) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{col}: {x} vs {y}");
        }
    }
    // Rises to the limit; the complex pair in T leaves a ~2e-6 overshoot
    // near duration 16, so monotonicity is only checked on the climb.
    let d = column(&header, &rows, "duration");
    let climb = d.iter().position(|&x| x > 10.0).unwrap();
    assert!(a[..climb].windows(2).all(|w| w[1] > w[0]), "not increasing in duration");
    let limit = 0.215782738091;
    assert!(a[climb..].iter().all(|v| (v - limit).abs() < 5e-4));
}

#[test]
fn heterogeneous_residual_lifetime_bends() {
    let (dir, _) = bundle("single");
    let (header, rows) = read_table(&dir, "by_age_heterogeneous.csv");
    let r = column(&header, &rows, "residual");
    let (k, min) = r
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
    assert!(k > 0 && k + 1 < r.len(), "minimum at the boundary");
    assert!(r[0] > min && *r.last().unwrap() > min);
    assert!(r[..=k].windows(2).all(|w| w[1] <= w[0]));
    assert!(r[k..].windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn survival_dies_faster_under_homogeneity() {
    let (dir, out) = bundle("single");
    let (header, hom) = read_table(&dir, "survival_homogeneous.csv");
    let (_, het) = read_table(&dir, "survival_heterogeneous.csv");
    let k = header.iter().position(|h| h == "value_t4").unwrap();
    assert!(hom.last().unwrap()[k] < 1e-3);
    assert!(het.last().unwrap()[k] > 1e-3);
    assert!(out.contains("heterogeneous: long-run forward divorce intensity from M = 0.05394568"), "{out}");
    let file = dir.path().join("model_heterogeneous.toml");
    ok(&["validate", "--model", s(&file)]);
}

#[test]
fn competing_bundle_holds_sub_distributions() {
    let (dir, _) = bundle("competing");
    for tag in ["heterogeneous", "homogeneous"] {
        let (header, rows) = read_table(&dir, &format!("sub_distribution_{tag}.csv"));
        for t in ["0.01", "4", "10"] {
            let fw = column(&header, &rows, &format!("F_W_t{t}"));
            let fd = column(&header, &rows, &format!("F_D_t{t}"));
            let sw = column(&header, &rows, &format!("Fbar_W_t{t}"));
            let sd = column(&header, &rows, &format!("Fbar_D_t{t}"));
            for k in 0..rows.len() {
                assert!((fw[k] + sw[k] + fd[k] + sd[k] - 1.0).abs() < 1e-10, "{tag} t={t} row {k}");
            }
            assert!(fd.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        }
    }
}

#[test]
fn example_pi_override_is_validated() {
    let dir = TempDir::new().unwrap();
    let out = gph(&["example-marriage", "--out-dir", s(dir.path()), "--pi", "0.5,0.3,0.1"]);
    assert!(!out.status.success());
    ok(&["example-marriage", "--out-dir", s(dir.path()), "--pi", "0.2,0.8,0,0"]);
}
