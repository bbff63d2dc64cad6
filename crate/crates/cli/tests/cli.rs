use std::path::Path;
use std::process::{Command, Output};

fn qplane(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qplane")).args(args).env("QPLANE_OUTPUT_ROOT", root).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn capacity_prints_four_pi() {
    let dir = tempfile::tempdir().unwrap();
    let o = qplane(dir.path(), &["capacity", "--n", "3", "--r", "1", "--R", "2.71828182845905"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("capacity = 12.5663706"), "{}", stdout(&o));
}

#[test]
fn matrix_props_reports_zero_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = qplane(dir.path(), &["matrix-props", "--trials", "200", "--seed", "7", "--dims", "3,4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 violations"));
}

#[test]
fn maps_list_names_every_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&qplane(dir.path(), &["maps", "list"]));
    for id in ["identity", "radial_stretch", "linear", "shear_bump"] {
        assert!(out.contains(id));
    }
}

#[test]
fn verify_main_identity_passes_and_writes_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = qplane(
        dir.path(),
        &["verify-main", "--map", "identity", "--r", "1", "--R", "2", "--mesh-level", "3", "--tau-steps", "2"],
    );
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("ln mid") && out.trim_end().ends_with("PASS"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn corrupted_k_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = qplane(
        dir.path(),
        &[
            "verify-main",
            "--map",
            "radial_stretch:alpha=2",
            "--k-override",
            "1",
            "--mesh-level",
            "3",
            "--tau-steps",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ring.conf");
    std::fs::write(&cfg, "# ring\nn = 2\nR = 7.38905609893065\n").unwrap();
    let o = qplane(dir.path(), &["capacity", "--config", cfg.to_str().unwrap(), "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    // 2 pi / ln(e^2)
    assert!(stdout(&o).contains("capacity = 3.1415926"), "{}", stdout(&o));

    let json = dir.path().join("run.json");
    std::fs::write(&json, r#"{"r": 1, "R": 2, "mesh_level": 3, "tau_steps": 2}"#).unwrap();
    let o = qplane(dir.path(), &["distortion", "--config", json.to_str().unwrap(), "--R", "9"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("R = 2 "), "{}", stdout(&o));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "mesh_level = 12\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["verify-main", "--r", "2", "--R", "1"],
        vec!["verify-main", "--config", bad.to_str().unwrap()],
        vec!["verify-main", "--config", "/nonexistent/qplane.conf"],
        vec!["verify-main", "--set", "colour=blue"],
        vec!["verify-main", "--map", "nosuchmap"],
        vec!["capacity", "--config", bad.to_str().unwrap()],
        vec!["sweep", "--param", "colour", "--values", "1,2"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let o = qplane(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    // nothing computed, nothing written
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 0);
}

#[test]
fn eta_cap_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = qplane(dir.path(), &["eta", "--cap", "0.2", "--p", "2", "--mesh-level", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("lambda * theta")).unwrap();
    let v: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((v - 2.4048).abs() < 0.15, "{v}");
}

#[test]
fn sweep_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = qplane(dir.path(), &["sweep", "--param", "tau_steps", "--values", "2,4", "--mesh-level", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("monotone"));
    assert!(dir.path().join("sweeps").is_dir());
}
