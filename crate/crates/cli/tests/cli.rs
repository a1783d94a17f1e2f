use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const PRESET: &str = include_str!("../../../configs/depinning.toml");

fn fbd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbd")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_reproduces_depinning() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "depinning.toml", PRESET);
    let o = fbd(&["simulate", "--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(&tmp.path().join("run/diagnostics.json"));
    let t = d["depinning_time"].as_f64().unwrap();
    assert!((0.04..=0.06).contains(&t), "{t}");
    assert_eq!(d["flow_rule"]["violations"].as_array().unwrap().len(), 0);

    let iface = fs::read_to_string(tmp.path().join("run/interface.csv")).unwrap();
    let mut lines = iface.lines();
    assert_eq!(lines.next().unwrap(), "t,xi,mode,p_at_xi");
    assert_eq!(iface.lines().count(), 27);
    assert!(!iface.contains('\r'));

    let snap = fs::read_to_string(tmp.path().join("run/snapshot_2_u.csv")).unwrap();
    let first = snap.lines().next().unwrap();
    assert!(first.starts_with("# t = 5.0000000000000010e-2"), "{first}");
    assert_eq!(snap.lines().nth(1).unwrap(), "x,value");
    // 17 significant digits
    let v = snap.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    assert_eq!(v.split('e').next().unwrap().replace(['-', '.'], "").len(), 17, "{v}");
    let side = json(&tmp.path().join("run/snapshot_2.json"));
    assert_eq!(side["right_limit"].as_f64().unwrap() - side["left_limit"].as_f64().unwrap(), 2.0);
    assert_eq!(side["alpha"].as_f64().unwrap(), 7.0);
}

#[test]
fn sign_data_keep_the_interface() {
    let tmp = TempDir::new().unwrap();
    let text = PRESET
        .replace("slope = 2.0\nintercept = -0.6", "slope = 0.0\nintercept = -1.0")
        .replace("slope = 7.0\nintercept = 1.4", "slope = 0.0\nintercept = 1.0")
        .replace("alpha = 7.0", "alpha = 1.0");
    let cfg = write_config(tmp.path(), "sgn.toml", &text);
    let o = fbd(&["simulate", "--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let iface = fs::read_to_string(tmp.path().join("run/interface.csv")).unwrap();
    let xis: Vec<&str> = iface.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(xis.iter().all(|x| *x == xis[0]), "{xis:?}");
    assert!(json(&tmp.path().join("run/diagnostics.json"))["depinning_time"].is_null());
}

#[test]
fn strict_preset_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = fbd(&["simulate", "--strict", "--out", "run"], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("admissibility"));
}

#[test]
fn config_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", &PRESET.replace("t_final = 0.25", "t_finale = 0.25"));
    let o = fbd(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("t_finale"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "gap.toml", &PRESET.replace("x_from = 0.0", "x_from = 0.5"));
    let o = fbd(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("init.segments[1].x_from"), "{}", stderr(&o));

    let o = fbd(&["simulate", "--config", "missing.toml"], tmp.path());
    assert_eq!(code(&o), 1);
    let o = fbd(&["simulate", "--bogus"], tmp.path());
    assert_eq!(code(&o), 1);
    let o = fbd(&["frobnicate"], tmp.path());
    assert_eq!(code(&o), 1);
    let o = fbd(&["--help"], tmp.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn sweep_rejects_bad_parameters() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", &PRESET.replace("gamma = 0.25", "gamma = 0.6"));
    let o = fbd(&["sweep", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Hölder"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "one.toml", &PRESET.replace("eps2_list = [0.01, 0.005, 0.0025]", "eps2_list = [0.01]"));
    let o = fbd(&["sweep", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("eps2_list"), "{}", stderr(&o));
}

#[test]
fn sweep_reports_member_failure() {
    let tmp = TempDir::new().unwrap();
    // the last member's eps is too small for the grid
    let text = PRESET.replace("eps2_list = [0.01, 0.005, 0.0025]", "eps2_list = [0.01, 0.005, 0.00001]");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let o = fbd(&["sweep", "--config", &cfg, "--out", "sw"], tmp.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let rep = json(&tmp.path().join("sw/sweep_report.json"));
    let status = rep["status"].as_array().unwrap();
    assert!(status[0]["error"].is_null());
    assert!(status[2]["error"].as_str().unwrap().contains("domain.h"));
    assert_eq!(rep["members"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_is_deterministic_and_seeded() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        assert_eq!(code(&fbd(&["sweep", "--seed", "11", "--out", dir], tmp.path())), 0);
    }
    assert_eq!(code(&fbd(&["sweep", "--seed", "12", "--out", "c"], tmp.path())), 0);
    let names: Vec<_> = fs::read_dir(tmp.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 6);
    for name in &names {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical runs");
    }
    let rep = json(&tmp.path().join("a/sweep_report.json"));
    assert_eq!(rep["seed"].as_u64().unwrap(), 11);
    let xi = rep["xi_distances"].as_array().unwrap();
    assert!(xi[1].as_f64().unwrap() < xi[0].as_f64().unwrap());
    let other = json(&tmp.path().join("c/sweep_report.json"));
    assert_ne!(rep["holder_quotients"], other["holder_quotients"]);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        assert_eq!(code(&fbd(&["simulate", "--out", dir], tmp.path())), 0);
    }
    for e in fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(fs::read(tmp.path().join("a").join(&name)).unwrap(), fs::read(tmp.path().join("b").join(&name)).unwrap());
    }
}

#[test]
fn decompose_identity_and_telescoping() {
    let tmp = TempDir::new().unwrap();
    let text = PRESET.replace("# times = [0.05, 0.15]", "times = [0.03, 0.15, 0.25]");
    let cfg = write_config(tmp.path(), "d.toml", &text);
    let o = fbd(&["decompose", "--config", &cfg, "--out", "dec"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sum = json(&tmp.path().join("dec/decompose.json"));
    let rows = sum.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    // standing phase: no fluctuations yet
    assert_eq!(rows[0]["f_sup"].as_f64().unwrap(), 0.0);
    for r in rows {
        assert!(r["identity_defect"].as_f64().unwrap() < 1e-6);
        assert!(r["telescoping_defect"].as_f64().unwrap() < 1e-12);
    }
    assert!(rows[1]["f_sup"].as_f64().unwrap() > 0.0);

    let csv = fs::read_to_string(tmp.path().join("dec/decompose_1.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "x,p,q,f,f_ess4,f_neg_total");
    for line in csv.lines().skip(2) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - (v[2] - v[3])).abs() < 1e-6);
        assert!((v[3] - v[4] - v[5]).abs() < 1e-12);
    }
    let split = fs::read_to_string(tmp.path().join("dec/split_1.csv")).unwrap();
    assert_eq!(split.lines().nth(1).unwrap().split(',').count(), 9);
}

#[test]
fn kernelcheck_tables() {
    let tmp = TempDir::new().unwrap();
    let o = fbd(&["kernelcheck", "--out", "k"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&tmp.path().join("k/kernelcheck.json"));
    assert!((rep["unit_gap_at_origin"].as_f64().unwrap() - 2.179052).abs() < 1e-6);
    let gaps: Vec<f64> =
        rep["gaps"].as_array().unwrap().iter().map(|r| r["gap_normalized"].as_f64().unwrap()).collect();
    let at16 = gaps[2];
    assert!(gaps[1..].iter().all(|&g| g <= 2.0 * at16), "{gaps:?}");
    let weights = fs::read_to_string(tmp.path().join("k/cauchy_weights.csv")).unwrap();
    assert_eq!(weights.lines().next().unwrap(), "n,int_b,int_b_over_s2");
    for line in weights.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        assert!(v.iter().all(|&x| x > 0.0 && x < 2.0));
    }
}

#[test]
fn config_subcommand_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PRESET);
    let o = fbd(&["config", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 0);
    let once = String::from_utf8(o.stdout).unwrap();
    let again = write_config(tmp.path(), "again.toml", &once);
    let o = fbd(&["config", "--config", &again], tmp.path());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), once);
}
