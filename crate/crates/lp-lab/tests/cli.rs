use landau_pekar::experiment::verify_outputs;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 4] = ["--n", "256", "--R", "12"];

fn lp_lab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lp-lab")).env("LP_LAB_OUT", root).args(args).output().expect("spawn lp-lab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pekar_writes_certified_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lp_lab(tmp.path(), &["run", "pekar", "--n", "512", "--R", "12", "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = verify_outputs(&tmp.path().join("p")).unwrap();
    assert_eq!(m.status, "ok");
    assert!(!m.incomplete);
    for f in ["pekar.json", "psi_p.csv", "potential.csv"] {
        assert!(m.outputs.iter().any(|x| x == f), "{f} missing");
    }
    assert_eq!(m.grid.n_points, 512);
    assert!(m.summary["pekar"]["virial_defect"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn coarse_grid_fails_the_virial_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lp_lab(tmp.path(), &[&["pekar", "--out", "p"][..], &SMALL[..]].concat());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("virial-defect"), "{}", stderr(&o));
    let m = verify_outputs(&tmp.path().join("p")).unwrap();
    assert!(!m.incomplete);
    assert_eq!(m.status, "invariant-violation");
}

#[test]
fn dt_above_cap_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lp_lab(tmp.path(), &["evolve", "--dt", "0.5", "--out", "e"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`dt`"), "{}", stderr(&o));
    assert!(!tmp.path().join("e").exists());
}

#[test]
fn negative_alpha_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lp_lab(tmp.path(), &["pekar", "--alpha", "-1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`alpha`"), "{}", stderr(&o));
}

#[test]
fn bad_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "alpha = 2\ncolour = blue\n").unwrap();
    let o = lp_lab(tmp.path(), &["pekar", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("a.cfg");
    fs::write(&cfg, "kind = coercivity-audit\nalpha = 3\nseed = 5\n").unwrap();
    let o = lp_lab(tmp.path(), &["--print-config", "evolve", "--config", cfg.to_str().unwrap(), "--alpha", "1.5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("kind = evolve\n"));
    assert!(text.contains("alpha = 1.5\n"));
    assert!(text.contains("seed = 5\n"));
}

#[test]
fn identical_configs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [&["evolve", "--alpha", "1", "--horizon-mult", "0.5", "--out", "run"][..], &SMALL[..]].concat();
    for root in ["a", "b"] {
        let o = lp_lab(&tmp.path().join(root), &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(tmp.path().join("a/run/trajectory.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/run/trajectory.csv")).unwrap();
    assert_eq!(a, b);
    verify_outputs(&tmp.path().join("a/run")).unwrap();
}

#[test]
fn budget_violation_marks_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tight.cfg");
    fs::write(&cfg, "energy_budget = 1e-20\n").unwrap();
    let o = lp_lab(tmp.path(), &[&["evolve", "--config", cfg.to_str().unwrap(), "--alpha", "1", "--out", "t"][..], &SMALL[..]].concat());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("energy conservation"));
    let m = verify_outputs(&tmp.path().join("t")).unwrap();
    assert!(m.incomplete);
    assert_eq!(m.status, "invariant-violation");
    assert!(m.outputs.iter().any(|x| x == "trajectory.csv"));
}

#[test]
fn sweep_rows_follow_alpha_order() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lp_lab(tmp.path(), &[&["adiabatic-sweep", "--alphas", "2.25,1,1.5", "--horizon-mult", "0.3", "--workers", "2", "--out", "s"][..], &SMALL[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let alphas: Vec<&str> = csv.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(alphas, ["1.0", "1.5", "2.25"]);
    assert!(csv.lines().nth(1).unwrap() == "alpha,eps,sup_dev_sq,sup_theta_dev_sq,horizon,dt");
    verify_outputs(&tmp.path().join("s")).unwrap();
}

#[test]
fn audit_and_gap_track_pass_on_small_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lp_lab(tmp.path(), &[&["coercivity-audit", "--samples", "12", "--out", "c"][..], &SMALL[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header = fs::read_to_string(tmp.path().join("c/audit.csv")).unwrap().lines().nth(1).unwrap().to_string();
    assert_eq!(header, "radius,dist_H1_sq,dE,ratio,dist_L2_sq,dF,ratioF,lemma28_lhs1,lemma28_lhs2");
    let o = lp_lab(tmp.path(), &[&["gap-track", "--alpha", "1", "--horizon-mult", "1", "--out", "g"][..], &SMALL[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = verify_outputs(&tmp.path().join("g")).unwrap();
    assert_eq!(m.summary["gap"]["violations"].as_u64(), Some(0));
}
