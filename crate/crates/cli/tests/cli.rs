use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hermiton_cli::Scenario;
use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> PathBuf {
    scenarios().join(format!("{name}.json"))
}

fn hermiton(args: &[&str], scenario_files: &[PathBuf], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hermiton"));
    cmd.args(args).arg("--out").arg(out).env("HERMITON_LOG", "error");
    for s in scenario_files {
        cmd.arg("--scenario").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().next().expect("one report line")).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn every_scenario_file_round_trips() {
    let mut count = 0;
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let s = Scenario::load(&path).unwrap();
            let again = Scenario::from_json(&s.to_json()).unwrap();
            assert_eq!(s, again, "{}", path.display());
            count += 1;
        }
    }
    assert!(count >= 8);
}

#[test]
fn schrodinger_components_rotate_in_phase() {
    let dir = tempfile::tempdir().unwrap();
    let out = hermiton(&["simulate"], &[scenario("schrodinger_diag")], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("schrodinger_diag/trajectory.csv"));
    assert_eq!(header[..5], ["t", "Re(psi_1)", "Im(psi_1)", "Re(psi_2)", "Im(psi_2)"]);
    assert_eq!(header.last().unwrap(), "herm_drift");
    assert!(rows.len() > 10);
    // ψ₁ = e^{−it}, ψ₂ = i e^{−2it}
    for r in &rows {
        let t = r[0];
        assert!((r[1] - t.cos()).abs() < 1e-9 && (r[2] + t.sin()).abs() < 1e-9);
        assert!((r[3] - (2.0 * t).sin()).abs() < 1e-9 && (r[4] - (2.0 * t).cos()).abs() < 1e-9);
        assert!((r[r.len() - 2] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn geodesic_simulation_matches_oracle_columns() {
    let dir = tempfile::tempdir().unwrap();
    let sim = hermiton(&["simulate"], &[scenario("geodesic")], dir.path());
    assert!(sim.status.success());
    let orc = hermiton(&["oracle"], &[scenario("geodesic")], dir.path());
    assert!(orc.status.success());
    assert!(report(&orc)["max_deviation"].as_f64().unwrap() < 1e-7);

    let (th, traj) = read_csv(&dir.path().join("geodesic/trajectory.csv"));
    let (oh, table) = read_csv(&dir.path().join("geodesic/oracle.csv"));
    assert_eq!(traj.len(), table.len());
    let g0 = th.iter().position(|h| h == "Re(G_11)").unwrap();
    let e0 = oh.iter().position(|h| h == "exact Re(G_11)").unwrap();
    for (a, b) in traj.iter().zip(&table) {
        assert_eq!(a[0], b[0]);
        for k in 0..8 {
            assert!((a[g0 + k] - b[e0 + k]).abs() < 1e-7);
        }
    }
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = hermiton(&["simulate"], &[scenario("bad_gamma")], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotHermitian"));

    let out = hermiton(&["simulate"], &[scenario("killing_degenerate")], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("DegenerateKinetic") && msg.contains("gamma_geodesic"), "{msg}");

    let missing = dir.path().join("absent.json");
    assert_ne!(hermiton(&["simulate"], &[missing], dir.path()).status.code(), Some(0));
}

#[test]
fn step_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = hermiton(&["simulate"], &[scenario("blowup")], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("StepFailure") && msg.contains("second_order"), "{msg}");
}

#[test]
fn oracle_is_refused_for_the_full_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = hermiton(&["oracle"], &[scenario("full_model")], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoOracleForTier"));

    let out = hermiton(&["oracle"], &[scenario("schrodinger_diag")], dir.path());
    assert!(out.status.success());
    assert!(report(&out)["max_deviation"].as_f64().unwrap() < 1e-9);
}

fn verdict<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["verdicts"].as_array().unwrap().iter().find(|v| v["name"] == name).unwrap()
}

#[test]
fn check_pass_fail_and_static_cases() {
    let dir = tempfile::tempdir().unwrap();
    let pass = hermiton(&["check"], &[scenario("full_model")], dir.path());
    assert_eq!(pass.status.code(), Some(0));
    let r = report(&pass);
    assert_eq!(r["passed"], true);
    for name in ["energy", "charges", "hermiticity", "legendre_round_trip", "el_vs_fd"] {
        assert_eq!(verdict(&r, name)["status"], "pass", "{name}");
    }
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("full_model/check.json")).unwrap()).unwrap();
    assert_eq!(on_disk["verdicts"], r["verdicts"]);

    let fault = hermiton(&["check"], &[scenario("full_model_fault")], dir.path());
    assert_eq!(fault.status.code(), Some(1));
    let r = report(&fault);
    assert_eq!(r["passed"], false);
    assert_eq!(verdict(&r, "el_vs_fd")["status"], "fail");
    assert_eq!(verdict(&r, "energy")["status"], "pass");

    let still = hermiton(&["check"], &[scenario("static_geodesic")], dir.path());
    assert_eq!(still.status.code(), Some(0));
    let r = report(&still);
    assert_eq!(verdict(&r, "energy")["value"], 0.0);
    assert_eq!(verdict(&r, "charges")["value"], 0.0);
}

fn reduce_report(name: &str) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let out = hermiton(&["reduce"], &[scenario(name)], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    report(&out)
}

#[test]
fn reduce_reports_canonical_and_degraded_charts() {
    // Γ = I/(2α) with α = 1/2 is already canonical
    let r = reduce_report("reduce_canonical");
    assert_eq!(r["is_darboux"], true);
    assert!(r["chart_error"].is_null());
    assert_eq!(r["alpha_matrix"][0][1], -0.2);
    assert!(r["canonical_basis"].is_array());

    let r = reduce_report("reduce_indefinite");
    assert_eq!(r["is_darboux"], false);
    assert!(r["chart_error"].as_str().unwrap().contains("NotPositiveDefinite"));
    assert!(r["canonical_basis"].is_null());
    // Im Γ enters the two-form as −2αA on the diagonal blocks
    assert_eq!(r["A"][0][1], 0.3);
    assert_eq!(r["two_form"][0][1], -0.3);
    assert_eq!(r["multipliers"].as_array().unwrap().len(), 2);

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hermiton(&["reduce"], &[scenario("full_model")], dir.path()).status.code(), Some(2));
}

#[test]
fn runs_are_deterministic_across_jobs() {
    let files = [scenario("full_model"), scenario("geodesic"), scenario("schrodinger_diag")];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = hermiton(&["simulate", "--jobs", "1", "--seed", "11"], &files, a.path());
    let many = hermiton(&["simulate", "--jobs", "3", "--seed", "11"], &files, b.path());
    assert!(one.status.success() && many.status.success());
    assert_eq!(String::from_utf8_lossy(&one.stdout).lines().count(), 3);
    for stem in ["full_model", "geodesic", "schrodinger_diag"] {
        for file in ["trajectory.csv", "diagnostics.jsonl"] {
            let x = std::fs::read(a.path().join(stem).join(file)).unwrap();
            let y = std::fs::read(b.path().join(stem).join(file)).unwrap();
            assert_eq!(x, y, "{stem}/{file}");
        }
    }
    let c1 = hermiton(&["check", "--seed", "5"], &[scenario("full_model")], a.path());
    let c2 = hermiton(&["check", "--seed", "5"], &[scenario("full_model")], b.path());
    assert_eq!(c1.stdout, c2.stdout);
    assert_eq!(report(&c1)["seed"], 5);
}

#[test]
fn charges_are_written_as_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = hermiton(&["charges"], &[scenario("full_model")], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("full_model/charges.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.last().unwrap()["kind"], "summary");
    let first = &lines[0];
    assert_eq!(first["charges"].as_array().unwrap().len(), 8);
    assert_eq!(first["V"].as_array().unwrap().len(), 2);
    for c in report(&out)["charges"].as_array().unwrap() {
        assert!(c["value"].as_f64().unwrap() < 1e-9, "{c}");
    }
}
