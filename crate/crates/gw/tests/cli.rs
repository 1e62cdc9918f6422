use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gw::table::{emit_plotdata, Table};
use tempfile::TempDir;

const B23: &str = r#"{"p": {"2": 0.5, "3": "0.5"}}"#;
const GEO: &str = r#"{"p": {"1": 0.5, "2": 0.25, "3": 0.125, "4": 0.0625, "5": 0.0625}}"#;

fn gw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gw"))
        .args(args)
        .env_remove("GW_THREADS")
        .output()
        .expect("gw runs")
}

fn law(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn pmf_sums_to_one() {
    let dir = TempDir::new().unwrap();
    let l = law(&dir, "geo.json", GEO);
    let out = dir.path().join("p.csv");
    let o = gw(&["pmf", "--law", s(&l), "--n", "6", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    assert_eq!(r[0], ["k", "log_prob", "prob", "unreliable_flag"]);
    let total: f64 = r[1..].iter().map(|row| row[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
    assert_eq!(r[1][0], "1");
    for row in &r[1..] {
        let (lp, p): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!((lp.exp() - p).abs() <= 1e-15 * p.max(1e-300));
    }
}

#[test]
fn minimal_identity_passes_with_summary() {
    let dir = TempDir::new().unwrap();
    let l = law(&dir, "b23.json", B23);
    let o = gw(&["verify", "--theorem", "minimal", "--law", s(&l), "--n-from", "1", "--n-to", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let out = dir.path().join("m.csv");
    let o = gw(&["verify", "--theorem", "minimal", "--law", s(&l), "--n-from", "1", "--n-to", "6", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["assertions"].as_array().unwrap().len(), 6);
    assert_eq!(summary["profile"]["alpha"], "infinite");
    assert_eq!(summary["profile"]["case"], "boettcher");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let l = law(&dir, "geo.json", GEO);
    assert_eq!(gw(&["pmf", "--law", s(&l), "--n", "3", "--bogus"]).status.code(), Some(2));
    assert_eq!(gw(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gw(&["--help"]).status.code(), Some(0));

    let bad = law(&dir, "bad.json", r#"{"p": {"-2": 0.5, "3": 0.5}}"#);
    let o = gw(&["pmf", "--law", s(&bad), "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative"));
    let missing = dir.path().join("none.json");
    assert_eq!(gw(&["pmf", "--law", s(&missing), "--n", "3"]).status.code(), Some(2));

    // strict windows refuse to drop more than the tail tolerance
    let o = gw(&["pmf", "--law", s(&l), "--n", "8", "--window-cap", "50"]);
    assert_eq!(o.status.code(), Some(3));
    let o = gw(&["pmf", "--law", s(&l), "--n", "8", "--window-cap", "50", "--truncate"]);
    assert_eq!(o.status.code(), Some(0));

    let b = law(&dir, "b23.json", B23);
    assert_eq!(gw(&["verify", "--theorem", "schroeder", "--law", s(&b)]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_gw"))
        .args(["pmf", "--law", s(&l), "--n", "2"])
        .env("GW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_gw"))
        .args(["pmf", "--law", s(&l), "--n", "2"])
        .env("GW_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failed_assertions_exit_one() {
    // at n <= 10 the points n 2^n are not yet deep in the left tail of b23
    let dir = TempDir::new().unwrap();
    let l = law(&dir, "b23.json", B23);
    let out = dir.path().join("b.csv");
    let o = gw(&["verify", "--theorem", "boettcher", "--law", s(&l), "--n-from", "5", "--n-to", "10", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
    assert_eq!(rows(&out).len(), 7);
}

#[test]
fn deterministic_and_law_untouched() {
    let dir = TempDir::new().unwrap();
    let l = law(&dir, "geo.json", GEO);
    let before = fs::metadata(&l).unwrap().modified().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = gw(&["simulate", "--law", s(&l), "--n", "5", "--reps", "2000", "--seed", "42", "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        fs::read(out).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let total: u64 = String::from_utf8(a)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 2000);
    assert_eq!(fs::read_to_string(&l).unwrap(), GEO);
    assert_eq!(fs::metadata(&l).unwrap().modified().unwrap(), before);
}

#[test]
fn limits_and_cramer_tables() {
    let dir = TempDir::new().unwrap();
    let l = law(&dir, "geo.json", GEO);
    let out = dir.path().join("w.csv");
    let plot = dir.path().join("w.plot.csv");
    let o = gw(&[
        "limits", "--law", s(&l), "--what", "density", "--grid", "0.5,1,2", "--n", "30", "--out", s(&out), "--plot",
        s(&plot),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    assert_eq!(r[0], ["x", "value", "error", "censored"]);
    assert_eq!(r.len(), 4);
    let p = rows(&plot);
    assert_eq!(p[0], ["x", "y", "series"]);
    assert!(p[1..].iter().all(|row| row[2] == "density"));

    let o = gw(&["limits", "--law", s(&l), "--what", "cdf", "--grid", "0:1:3", "--n", "30"]);
    assert_eq!(o.status.code(), Some(2), "x = 0 is outside the cdf domain");

    let b = law(&dir, "b23.json", B23);
    let o = gw(&["cramer", "--law", s(&b), "--what", "concentration", "--h", "1", "--n", "5", "--ell", "64"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let scaled: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(scaled.len(), 7);
    let max = scaled.iter().copied().fold(0.0, f64::max);
    assert!(max <= 4.0 * scaled[0]);

    let o = gw(&["cramer", "--law", s(&b), "--what", "saddle", "--n", "4", "--x", "0.6,0.7"]);
    assert_eq!(o.status.code(), Some(0));
    let h: Vec<f64> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(h[0] > h[1], "smaller targets need stronger tilts");
}

#[test]
fn empty_report_gives_header_only_plot() {
    let t = Table::new(&["n", "ratio"]).with_plot("n", "ratio", "schroeder");
    let mut buf = Vec::new();
    emit_plotdata(&t, &mut buf).unwrap();
    assert_eq!(buf, b"x,y,series\n");
}
