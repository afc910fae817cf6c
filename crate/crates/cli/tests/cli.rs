use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphwave_cli::{dispatch, RunManifest, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, SCHEMA_VERSION};
use serde_json::Value;
use tempfile::TempDir;

fn star3() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../graphs/star3.json")
}

fn graphwave(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphwave"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is one JSON document")
}

#[test]
fn spectrum_reports_star_eigenvalue() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(&["spectrum", star3().to_str().unwrap(), "--h", "0.01"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let v = stdout_json(&o);
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["status"], "ok");
    let l0 = v["lambda0"].as_f64().unwrap();
    assert!((l0 - 1.0 / 9.0).abs() < 1e-4, "{l0}");
    assert!(v["gap"].as_f64().unwrap() > 0.0);

    let m = RunManifest::read(dir.path()).unwrap();
    assert_eq!(m.command, "spectrum");
    assert_eq!(m.graph_sha256.as_deref().map(str::len), Some(64));
    assert_eq!(m.parameters["h"], 0.01);
}

#[test]
fn psi0_dump_is_written() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("psi.csv");
    let o = graphwave(
        &["spectrum", star3().to_str().unwrap(), "--dump-psi0", dump.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let text = fs::read_to_string(dump).unwrap();
    assert!(text.starts_with("edge_id,x,re,im"));
    assert!(text.lines().count() > 1000);
}

#[test]
fn infeasible_mass_exits_with_domain_code() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(
        &["minimize", star3().to_str().unwrap(), "--p", "5", "--c", "100", "--r", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_DOMAIN));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("r/λ₀"), "{err}");
    let v = stdout_json(&o);
    assert_eq!(v["status"], "error");
    assert_eq!(v["error"]["kind"], "domain");
}

#[test]
fn minimize_writes_profile_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(
        &["minimize", star3().to_str().unwrap(), "--p", "6", "--c", "0.5", "--h", "0.02"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let v = stdout_json(&o);
    assert!(v["energy"].as_f64().unwrap() < -0.5 * v["lambda0"].as_f64().unwrap() * 0.5);
    assert!(v["omega"].as_f64().unwrap() > v["lambda0"].as_f64().unwrap());
    assert_eq!(v["diagnostics"]["positivity_ok"], true);
    assert!(dir.path().join("minimizer.csv").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(&["spectrum", star3().to_str().unwrap(), "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(o.stdout.is_empty());
}

#[test]
fn empty_sweep_grid_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(
        &["sweep", star3().to_str().unwrap(), "--p", "5", "--c-min", "0.1", "--c-max", "1", "--points", "0"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert_eq!(stdout_json(&o)["error"]["kind"], "usage");
}

#[test]
fn sweep_output_is_reproducible() {
    let run = || {
        let dir = TempDir::new().unwrap();
        let o = graphwave(
            &[
                "sweep",
                star3().to_str().unwrap(),
                "--p",
                "5,6",
                "--c",
                "0.2,0.6,20",
                "--h",
                "0.04",
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(EXIT_OK));
        fs::read(dir.path().join("sweep.csv")).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 7);
    // the mass 20 lies outside the feasible ball and is reported per row
    assert_eq!(text.lines().filter(|l| l.contains(",failed,")).count(), 2);
}

#[test]
fn closed_form_profile_matches_mass_curve() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(
        &["closed-form", "--N", "3", "--gamma", "1", "--p", "5", "--omega", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let v = stdout_json(&o);
    let r = v["mass_curve_r"].as_f64().unwrap();
    assert!((r - 1.5 * 3f64.sqrt() * (1.0f64 / 3.0).acos()).abs() < 1e-9);
    assert!((v["mass"].as_f64().unwrap() - r).abs() < 1e-4);
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn closed_form_below_threshold_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(
        &["closed-form", "--N", "3", "--gamma", "1", "--p", "5", "--omega", "0.1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_DOMAIN));
}

#[test]
fn mass_curve_csv_has_requested_points() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(
        &["mass-curve", "--N", "3", "--gamma", "1", "--p", "6", "--omega-range", "0.2:1.0", "--points", "25"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let mut rdr = csv::Reader::from_path(dir.path().join("mass_curve.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 25);
    assert!((rows[0].0 - 0.2).abs() < 1e-12 && (rows[24].0 - 1.0).abs() < 1e-12);
    assert!(rows.iter().all(|&(_, r)| r > 0.0));
}

#[test]
fn validate_passes_on_star() {
    let dir = TempDir::new().unwrap();
    let o = graphwave(&["validate", star3().to_str().unwrap(), "--p", "5"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PASS"));
    assert_eq!(stdout_json(&o)["all_passed"], true);
    assert!(dir.path().join("validation.csv").exists());
}

#[test]
fn evolve_and_stability_write_traces() {
    let dir = TempDir::new().unwrap();
    let g = star3();
    let o = graphwave(
        &["evolve", g.to_str().unwrap(), "--p", "5", "--h", "0.04", "--dt", "0.01", "--T", "0.5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert!(stdout_json(&o)["mass_drift"].as_f64().unwrap().abs() < 1e-10);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,mass,energy,sup_norm"));

    let sdir = TempDir::new().unwrap();
    let o = graphwave(
        &[
            "stability", g.to_str().unwrap(), "--p", "6", "--h", "0.04", "--T", "1", "--delta", "0.01", "--mode",
            "noise", "--seed", "7",
        ],
        sdir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let v = stdout_json(&o);
    assert_eq!(v["perturbation"]["seed"], 7);
    assert!(v["sup_over_delta_norm"].as_f64().unwrap() < 10.0);
    assert_eq!(RunManifest::read(sdir.path()).unwrap().seed, 7);
}

#[test]
fn dispatch_reports_help_and_usage_codes() {
    assert_eq!(dispatch(["graphwave", "--help"]), EXIT_OK);
    assert_eq!(dispatch(["graphwave", "nonsense"]), EXIT_USAGE);
    assert_eq!(dispatch(["graphwave", "evolve", "g.json", "--T", "1"]), EXIT_USAGE);
}

#[test]
fn missing_graph_file_is_a_domain_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let code = dispatch([
        "graphwave",
        "spectrum",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_DOMAIN);
}
