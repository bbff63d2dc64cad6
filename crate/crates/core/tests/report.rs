use std::fs;
use std::path::Path;

use qplane::report::{run_sweep, run_verify, ExperimentConfig, SweepParam, SCHEMA_ID};
use qplane::ReportError;
use sha2::{Digest, Sha256};

fn quick(root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: 3,
        tau_steps: 2,
        output_root: Some(root.to_path_buf()),
        ..ExperimentConfig::default()
    }
}

#[test]
fn identity_run_writes_complete_manifest() {
    let root = tempfile::tempdir().unwrap();
    let out = run_verify(&quick(root.path())).unwrap();
    assert!(out.report.pass, "{:?}", out.report.flags);
    assert!(out.dir.starts_with(root.path().join(&out.manifest.config_hash[..16])));

    let mut on_disk: Vec<String> = fs::read_dir(&out.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = out.manifest.files.iter().map(|f| f.name.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for f in &out.manifest.files {
        let bytes = fs::read(out.dir.join(&f.name)).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(digest, f.sha256, "{}", f.name);
        assert!(String::from_utf8(bytes).unwrap().contains(SCHEMA_ID), "{} lacks the schema id", f.name);
    }
    let manifest = fs::read_to_string(out.dir.join("manifest.json")).unwrap();
    assert!(manifest.contains(SCHEMA_ID) && manifest.contains("lambda_profile"));
}

#[test]
fn reruns_append_new_directories() {
    let root = tempfile::tempdir().unwrap();
    let cfg = quick(root.path());
    let a = run_verify(&cfg).unwrap();
    let b = run_verify(&cfg).unwrap();
    assert_ne!(a.dir, b.dir);
    assert!(a.dir.ends_with("run-001") && b.dir.ends_with("run-002"));
}

#[test]
fn single_worker_reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let cfg = quick(root.path());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (a, b) = pool.install(|| (run_verify(&cfg).unwrap(), run_verify(&cfg).unwrap()));
    for f in ["report.csv", "profile.csv", "lambda_profile.dat"] {
        assert_eq!(fs::read(a.dir.join(f)).unwrap(), fs::read(b.dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_radii_fail_before_compute() {
    let root = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { r: 2.0, big_r: 1.0, ..quick(root.path()) };
    assert!(matches!(run_verify(&cfg), Err(ReportError::Config(_))));
    assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn corrupted_k_fails_the_chain() {
    let root = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { map: "radial_stretch:alpha=2".into(), k_override: Some(1.0), ..quick(root.path()) };
    let out = run_verify(&cfg).unwrap();
    assert!(!out.report.pass_mid_rhs);
    assert!(!out.report.pass);
}

#[test]
fn tau_grid_doubling_within_trapezoid_budget() {
    let root = tempfile::tempdir().unwrap();
    let sweep = run_sweep(&quick(root.path()), SweepParam::TauSteps, &[4.0, 8.0]).unwrap();
    let d = sweep.rows[1].delta_integral.unwrap().abs();
    assert!(d <= sweep.rows[0].integral_budget, "{d} vs {}", sweep.rows[0].integral_budget);
    assert!(sweep.table_path.exists());
}

/// Frozen from the first trusted run of the shear-bump preset.
#[test]
fn shear_bump_preset_matches_goldens() {
    let root = tempfile::tempdir().unwrap();
    let cfg =
        ExperimentConfig { output_root: Some(root.path().to_path_buf()), ..ExperimentConfig::shear_bump_preset() };
    let rep = run_verify(&cfg).unwrap().report;
    assert!(rep.pass, "{:?}", rep.flags);
    assert!((rep.a[2] - (-0.2777297841788248)).abs() < 1e-12);
    assert!((rep.k_used - 1.9022375422930107).abs() < 1e-12);
    assert!((rep.ko_used - 1.6588412897240574).abs() < 1e-12);
    assert!((rep.log_lhs - 0.6227158505853352).abs() <= rep.budget_lhs_mid);
    assert!((rep.log_mid - 4.047781643671181).abs() <= rep.budget_mid_rhs);
    assert!((rep.log_rhs - 131.59068601661707).abs() <= 1e-9 * 131.6);
}
