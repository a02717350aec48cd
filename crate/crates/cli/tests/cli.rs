use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edlab::report::{ComparisonReport, Distance, PerRepresentation, SnapshotReport};
use edlab::{emit_plots, exit};
use tempfile::TempDir;

fn edlab(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_edlab"));
    cmd.args(args).env_remove("EDLAB_SEED");
    if let Some(s) = env_seed {
        cmd.env("EDLAB_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const ARROW: &str = "scenario = \"arrow_of_time\"\n";

#[test]
fn validate_prints_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", "scenario = \"free_packet\"\n");
    let out = edlab(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(code(&out), i32::from(exit::PASS), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("[grid]") && text.contains("[tolerances]"), "{text}");
}

#[test]
fn mass_follows_from_eta_tau_sigma() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", "scenario = \"free_packet\"\n[constants]\neta = 1.0\ntau = 2.0\nsigma2 = 1.0\n");
    let out = edlab(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: toml::Value = toml::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["constants"]["mass"].as_float(), Some(2.0));
}

#[test]
fn inconsistent_constants_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "scenario = \"free_packet\"\n[constants]\neta = 1.0\ntau = 2.0\nsigma2 = 1.0\nmass = 3.0\n",
    );
    let out = edlab(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(code(&out), i32::from(exit::CONFIG_ERROR));
    assert!(stderr(&out).contains("eta*tau/sigma2"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_and_bad_enums_are_rejected() {
    let tmp = TempDir::new().unwrap();
    for (i, text) in [
        "scenario = \"free_packet\"\n[grid]\nnodes = 10\n",
        "scenario = \"free_packet\"\n[grid]\nboundary = \"open\"\n",
        "scenario = \"tunnelling\"\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(&tmp, &format!("c{i}.toml"), text);
        let out = edlab(&["validate", cfg.to_str().unwrap()], None);
        assert_eq!(code(&out), i32::from(exit::CONFIG_ERROR), "{text}");
    }
}

#[test]
fn seed_precedence_through_the_binary() {
    let tmp = TempDir::new().unwrap();
    let seed_of = |text: &str, flag: Option<&str>, env: Option<&str>| {
        let cfg = write_config(&tmp, "s.toml", text);
        let out_dir = tmp.path().join("out");
        let mut args = vec!["run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()];
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        let out = edlab(&args, env);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        read_report(&out_dir)["seed"].as_u64().unwrap()
    };
    let with_seed = format!("{ARROW}[ensemble]\nseed = 5\n");
    assert_eq!(seed_of(&with_seed, Some("9"), Some("7")), 9);
    assert_eq!(seed_of(&with_seed, None, Some("7")), 5);
    assert_eq!(seed_of(ARROW, None, Some("7")), 7);
    assert_eq!(seed_of(ARROW, None, None), 0);
}

#[test]
fn arrow_run_writes_its_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "a.toml", ARROW);
    let out_dir = tmp.path().join("out");
    let out = edlab(&["run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["resolved_config.toml", "provenance.json", "report.json", "moments.csv", "energy.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    assert!(out_dir.join("snapshots").is_dir() && out_dir.join("plots").is_dir());
    assert!(!out_dir.join("error.json").exists());
    assert_eq!(read_report(&out_dir)["pass"], serde_json::Value::Bool(true));
}

#[test]
fn unmet_tolerance_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "a.toml", &format!("{ARROW}[tolerances]\nasymmetry_min = 1.0\n"));
    let out_dir = tmp.path().join("out");
    let out = edlab(&["run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()], None);
    assert_eq!(code(&out), i32::from(exit::TOLERANCE_FAIL));
    assert!(stdout(&out).contains("FAIL"));
    assert_eq!(read_report(&out_dir)["pass"], serde_json::Value::Bool(false));
}

#[test]
fn runtime_failure_exits_three_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "f.toml",
        "scenario = \"free_packet\"\n[grid]\nn = 256\n[time]\ndt = 0.1\nsteps = 10\n[ensemble]\nwalkers = 0\nsubsteps = 1\n",
    );
    let out_dir = tmp.path().join("out");
    let out = edlab(&["run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()], None);
    assert_eq!(code(&out), i32::from(exit::RUNTIME_ERROR), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("error.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 3);
    assert!(!manifest["message"].as_str().unwrap().is_empty());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "f.toml",
        "scenario = \"free_packet\"\n[grid]\nn = 256\n[time]\nsteps = 100\n\
         [ensemble]\nwalkers = 2000\nseed = 3\ndump_walkers = 4\n",
    );
    let first = tmp.path().join("first");
    let out = edlab(&["run", cfg.to_str().unwrap(), "--out-dir", first.to_str().unwrap()], None);
    assert!(code(&out) <= 1, "{}", stderr(&out));
    let second = tmp.path().join("second");
    let resolved = first.join("resolved_config.toml");
    let out = edlab(&["run", resolved.to_str().unwrap(), "--out-dir", second.to_str().unwrap()], None);
    assert!(code(&out) <= 1, "{}", stderr(&out));
    let (a, b) = (csv_files(&first), csv_files(&second));
    assert!(a.iter().any(|(p, _)| p.ends_with("trajectories.csv")));
    assert_eq!(a, b);
}

fn snapshot(n: usize) -> SnapshotReport {
    let rho = vec![0.25; n];
    SnapshotReport {
        step: 0,
        t: 0.0,
        density: PerRepresentation { fields: Some(rho.clone()), schrodinger: Some(rho), ck: None, ensemble: None },
        mean: PerRepresentation { fields: Some(0.0), ..Default::default() },
        variance: PerRepresentation { fields: Some(1.0), ..Default::default() },
        analytic_variance: Some(1.0),
        distances: [("fields_vs_schrodinger".to_string(), Distance { l1: 0.0, l2: 0.0 })].into(),
    }
}

#[test]
fn plots_of_an_empty_report_are_headers_only() {
    let tmp = TempDir::new().unwrap();
    emit_plots(&ComparisonReport::empty("free_packet", 0), tmp.path()).unwrap();
    for f in ["energy.dat", "variance.dat"] {
        let text = fs::read_to_string(tmp.path().join(f)).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')), "{f}: {text}");
    }
    assert!(!tmp.path().join("density_000.dat").exists());
}

#[test]
fn plots_overlay_each_snapshot_deterministically() {
    let mut report = ComparisonReport::empty("free_packet", 0);
    report.x = vec![0.0, 1.0, 2.0, 3.0];
    report.snapshots.push(snapshot(4));
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    emit_plots(&report, a.path()).unwrap();
    emit_plots(&report, b.path()).unwrap();
    let overlay = fs::read_to_string(a.path().join("density_000.dat")).unwrap();
    let rows: Vec<&str> = overlay.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 5));
    assert!(!a.path().join("density_001.dat").exists());
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}
