//! End-to-end runs of the `autocat` binary.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use autocat::io::read_distribution_csv;
use autocat::model::State;
use autocat::stationary::{log_dirmult, log_poisson_nu};
use serde_json::Value;
use tempfile::TempDir;

fn autocat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autocat")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = autocat(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file in `dir` other than the manifest is listed in it, and vice versa.
fn assert_manifest_complete(dir: &Path) {
    let on_disk: BTreeSet<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    let listed: BTreeSet<String> = manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(on_disk, listed, "{}", dir.display());
}

const BIMODAL_V20: &str = r#"{"kind":"scaled","V":20,"D":0.01,"kappa_prime":[1.0,1.01]}"#;
const SYM: &str = r#"{"kind":"raw","d":2,"kappa":[0.5,0.5],"lambda":[1.0,2.0],"delta":0.5}"#;

#[test]
fn symmetric_stationary_table_is_the_poisson_dirichlet_multinomial_law() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sym.json", SYM);
    let out = tmp.path().join("st");
    ok(&["stationary", "--config", &cfg, "--out", s(&out), "--nmax", "30"]);
    let dist = read_distribution_csv(&out.join("stationary.csv")).unwrap();
    assert_eq!(dist.len(), 31 * 32 / 2);
    // alpha_i = delta lambda_i / (kappa sum lambda), mean total 6
    let alpha = [1.0 / 3.0, 2.0 / 3.0];
    let mass: f64 = (0..=30).map(|n| log_poisson_nu(6.0, n).exp()).sum();
    for (a, lp) in dist.iter() {
        let want = log_poisson_nu(6.0, a.n()) + log_dirmult(a.n(), &alpha, a).unwrap() - mass.ln();
        assert!((lp - want).abs() < 1e-12 * want.abs().max(1.0), "{a}: {lp} vs {want}");
    }
    assert_eq!(manifest(&out)["details"]["exact"], Value::Bool(true));
    assert_manifest_complete(&out);
}

#[test]
fn stationary_table_round_trips_through_compare() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bimodal.json", BIMODAL_V20);
    let st = tmp.path().join("st");
    ok(&["stationary", "--config", &cfg, "--out", s(&st)]);
    let csv = st.join("stationary.csv");
    let cmp = tmp.path().join("cmp");
    ok(&["compare", "--a", s(&csv), "--b", s(&csv), "--out", s(&cmp)]);
    let report: Value = serde_json::from_slice(&fs::read(cmp.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["tv"].as_f64(), Some(0.0));
    assert_eq!(report["max_abs_diff"].as_f64(), Some(0.0));
    assert_eq!(report["modes_a"], report["modes_b"]);
    assert_manifest_complete(&cmp);
}

#[test]
fn fixed_point_of_the_weakly_asymmetric_network() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "weak.json",
        r#"{"kind":"scaled","V":2000,"D":0.01,"kappa_prime":[1.0,1.001]}"#,
    );
    let out = ok(&["fixed-point", "--config", &cfg]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["a1_star"].as_f64().unwrap() - 1801.96).abs() <= 0.01, "{v}");
    assert!((v["a2_star"].as_f64().unwrap() - 2198.04).abs() <= 0.01, "{v}");
    assert_eq!(v["stable"], Value::Bool(true));
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn simulated_occupation_matches_the_product_law() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bimodal.json", BIMODAL_V20);
    let (st, sim) = (tmp.path().join("st"), tmp.path().join("sim"));
    ok(&["stationary", "--config", &cfg, "--out", s(&st)]);
    ok(&["simulate", "--config", &cfg, "--t-max", "2e5", "--seed", "11", "--replicas", "4", "--out", s(&sim)]);
    let out = ok(&[
        "compare",
        "--a",
        s(&st.join("stationary.csv")),
        "--b",
        s(&sim.join("occupation.csv")),
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let tv = report["tv"].as_f64().unwrap();
    assert!(tv < 0.05, "TV {tv}");
}

#[test]
fn seed_determines_simulation_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bimodal.json", BIMODAL_V20);
    let run = |name: &str, seed: &str| -> PathBuf {
        let out = tmp.path().join(name);
        ok(&["simulate", "--config", &cfg, "--max-events", "20000", "--seed", seed, "--out", s(&out)]);
        out
    };
    let (a, b, c) = (run("a", "5"), run("b", "5"), run("c", "6"));
    for name in ["occupation.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_ne!(fs::read(a.join("occupation.csv")).unwrap(), fs::read(c.join("occupation.csv")).unwrap());
    let m = manifest(&a);
    assert_eq!(m["seed"].as_u64(), Some(5));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["params_echo"]["kind"], "scaled");
    assert!(m["tool_version"].as_str().is_some_and(|v| !v.is_empty()));
    assert_manifest_complete(&a);
}

#[test]
fn every_command_lists_its_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bimodal.json", BIMODAL_V20);
    let dir = |n: &str| tmp.path().join(n);
    ok(&["balance", "--config", &cfg, "--grid", "20", "--ratios", "--out", s(&dir("bal"))]);
    ok(&["exact", "--config", &cfg, "--nmax", "40", "--out", s(&dir("ex"))]);
    ok(&["fixed-point", "--config", &cfg, "--out", s(&dir("fp"))]);
    ok(&["regimes", "--config", &cfg, "--volumes", "20", "--flows", "0.01,0.1", "--out", s(&dir("reg"))]);
    for n in ["bal", "ex", "fp", "reg"] {
        assert_manifest_complete(&dir(n));
    }
    let outputs = &manifest(&dir("bal"))["outputs"];
    assert_eq!(outputs, &serde_json::json!(["balance.csv", "ratios.csv"]));
    assert!(manifest(&dir("ex"))["details"]["residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn exact_solve_of_a_symmetric_network_matches_the_closed_form() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sym.json", SYM);
    let (st, ex) = (tmp.path().join("st"), tmp.path().join("ex"));
    ok(&["stationary", "--config", &cfg, "--nmax", "40", "--out", s(&st)]);
    ok(&["exact", "--config", &cfg, "--nmax", "40", "--policy", "reflect", "--out", s(&ex)]);
    let out = ok(&[
        "compare",
        "--a",
        s(&st.join("stationary.csv")),
        "--b",
        s(&ex.join("exact.csv")),
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["tv"].as_f64().unwrap() < 1e-9, "{report}");
}

#[test]
fn regimes_reports_the_three_sides_of_dv_equals_d() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bimodal.json", BIMODAL_V20);
    let out = ok(&["regimes", "--config", &cfg, "--volumes", "100", "--flows", "0.01,0.02,0.05"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let labels: Vec<&str> = rows.iter().map(|r| r[4]).collect();
    assert_eq!(labels, ["BOUNDARY_BIMODAL", "FLAT", "INTERIOR_UNIMODAL"]);
    assert_eq!(rows[2][6], "1");
    let mode: Vec<u64> = rows[2][7].split(':').map(|x| x.parse().unwrap()).collect();
    assert!(State::new(mode).min_count() > 0);
}

#[test]
fn relabelling_is_announced_and_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "swapped.json",
        r#"{"kind":"scaled","V":20,"D":0.01,"kappa_prime":[1.01,1.0]}"#,
    );
    let out_dir = tmp.path().join("bal");
    let out = ok(&["balance", "--config", &cfg, "--grid", "10", "--out", s(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("relabelled"));
    assert_eq!(manifest(&out_dir)["relabelled"], Value::Bool(true));

    let plain = write(tmp.path(), "bimodal.json", BIMODAL_V20);
    let plain_dir = tmp.path().join("plain");
    let out = ok(&["balance", "--config", &plain, "--grid", "10", "--out", s(&plain_dir)]);
    assert!(out.stderr.is_empty());
    assert_eq!(manifest(&plain_dir)["relabelled"], Value::Bool(false));
}

#[test]
fn exit_codes_separate_configuration_from_numerical_failures() {
    let tmp = TempDir::new().unwrap();
    let code = |args: &[&str]| autocat(args).status.code();
    let malformed = write(tmp.path(), "bad.json", r#"{"kind":"raw""#);
    let negative = write(
        tmp.path(),
        "neg.json",
        r#"{"kind":"raw","d":2,"kappa":[1,1],"lambda":[1,1],"delta":-1}"#,
    );
    let three = write(
        tmp.path(),
        "d3.json",
        r#"{"kind":"raw","d":3,"kappa":[1,1,2],"lambda":[1,1,1],"delta":1}"#,
    );
    let missing = tmp.path().join("missing.json");
    assert_eq!(code(&["stationary", "--config", s(&missing)]), Some(2));
    assert_eq!(code(&["stationary", "--config", &malformed]), Some(2));
    assert_eq!(code(&["stationary", "--config", &negative]), Some(2));
    assert_eq!(code(&["stationary", "--config", &three, "--bogus"]), Some(2));
    assert_eq!(code(&["balance", "--config", &three]), Some(2));
    assert_eq!(code(&["fixed-point", "--config", &three]), Some(2));
    assert_eq!(code(&["stationary", "--config", &three, "--tail-tol", "2"]), Some(2));
    // the truncated chain would need more states than the solver accepts
    assert_eq!(code(&["exact", "--config", &three, "--nmax", "5000"]), Some(3));
    let err = autocat(&["balance", "--config", &three]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("two-species"));
}
