//! Acceptance criteria, each at its pinned tolerance. One PASS/FAIL line per
//! criterion. Criteria listed in `KNOWN_GAPS` fail for reasons analysed in the
//! decisions ledger; they are still run and reported, but only an unexpected
//! failure makes this target exit nonzero.

use std::f64::consts::{E, PI};
use std::time::Instant;

use qplane::distortion::{
    capacity_energy_check, capacity_round_ring, check_growth_exponent, dilatation_used, dstar, min_max_radius,
    verify_main_inequality, DilatationPolicy, MinMaxOptions, VerifyOptions, VolumeSpec,
};
use qplane::eta::{estimate_lambda, SolverOptions};
use qplane::inequalities::{constants, run_property_suite, SLACK_TOL};
use qplane::report::{run_sweep, run_verify, ExperimentConfig, SweepParam};
use qplane::{build_sphere_mesh, MarkOptions, Point, QcMap, Sphere, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_GAPS: [u32; 2] = [4, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn suffix(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!("; failed: {}", items.join("; "))
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn c1() -> Outcome {
    let mut worst = Vec::new();
    let mut violations = 0;
    for (n, k) in [(3, 1), (4, 1), (4, 2), (5, 2), (5, 3)] {
        let s = run_property_suite(n, k, 100_000, 2024).expect("suite runs");
        violations += s.violations();
        let w = s.checks.iter().map(|c| c.worst_slack).fold(f64::INFINITY, f64::min);
        worst.push(format!("({n},{k}) worst slack {w:.3e}"));
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations at slack tol {SLACK_TOL:e}; {}", worst.join(", ")),
    }
}

fn c2() -> Outcome {
    let mut fails = Vec::new();
    if dstar(1.0).unwrap() != 1.0 {
        fails.push("dstar(1)".to_string());
    }
    let e24 = 24f64.exp();
    if rel(dstar(2.0).unwrap(), e24) > 1e-12 {
        fails.push("dstar(2)".into());
    }
    let (a, b, c) = constants(3, 1).unwrap();
    let want = [2f64.powf(0.75), 2f64.powf(1.0 / 6.0), 2f64.powf(1.5)];
    for (got, w) in [a, b, c].iter().zip(want) {
        if rel(*got, w) > 1e-12 {
            fails.push(format!("constants(3,1): {got} vs {w}"));
        }
    }
    if rel(capacity_round_ring(3, 1.0, E).unwrap(), 4.0 * PI) > 1e-12 {
        fails.push("capacity_round_ring(3,1,e)".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(2..=5);
        let r = rng.random_range(0.1..2.0);
        let big_r = r * rng.random_range(1.05..50.0);
        let e = rel(capacity_energy_check(n, r, big_r, 16).unwrap(), capacity_round_ring(n, r, big_r).unwrap());
        worst = worst.max(e);
    }
    if worst > 1e-8 {
        fails.push(format!("energy check rel err {worst:e}"));
    }
    Outcome { pass: fails.is_empty(), detail: format!("energy check worst rel err {worst:.2e}{}", suffix(&fails)) }
}

fn c3() -> Outcome {
    let theta = 0.2;
    let mesh =
        build_sphere_mesh(&Sphere::unit(), 6).unwrap().mark_cap(&Vec3::x(), theta, &MarkOptions::default()).unwrap();
    let e = estimate_lambda(&mesh, 2.0, &SolverOptions::default()).unwrap();
    let lt = e.lambda * theta;
    Outcome {
        pass: (2.35..=2.46).contains(&lt) && e.trusted,
        detail: format!("lambda*theta = {lt:.5} (j01 = 2.40483), trusted {}", e.trusted),
    }
}

fn tube_lambdas(p: f64) -> Vec<f64> {
    let sphere = build_sphere_mesh(&Sphere::unit(), 6).unwrap();
    let id = QcMap::identity(3).unwrap();
    [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            let m = sphere.mark_quasiplane_trace(&id, 1, eps, &MarkOptions::default()).unwrap();
            estimate_lambda(&m, p, &SolverOptions::default()).unwrap().lambda
        })
        .collect()
}

fn c4() -> Outcome {
    let l2 = tube_lambdas(2.0);
    let l3 = tube_lambdas(3.0);
    let drops: Vec<f64> = l2.windows(2).map(|w| 1.0 - w[1] / w[0]).collect();
    // halvings 0.05 -> 0.025 only
    let drifts: Vec<f64> = l3.windows(2).map(|w| (w[1] - w[0]).abs() / w[0]).collect();
    let p2_ok = drops.iter().all(|&d| d >= 0.30);
    let p3_ok = drifts[2..].iter().all(|&d| d < 0.05);
    Outcome {
        pass: p2_ok && p3_ok,
        detail: format!(
            "p=2 drops {:?} (need >= 30%): {}; p=3 drifts {:?} (need < 5% below 0.05): {}",
            drops.iter().map(|d| format!("{:.2}%", 100.0 * d)).collect::<Vec<_>>(),
            if p2_ok { "ok" } else { "fail" },
            drifts.iter().map(|d| format!("{:.3}%", 100.0 * d)).collect::<Vec<_>>(),
            if p3_ok { "ok" } else { "fail" },
        ),
    }
}

fn c5() -> Outcome {
    let f = QcMap::radial_stretch(3, 2.0).unwrap();
    let a = Point::zeros(3);
    let opts = MinMaxOptions::default();
    let mut worst = 0.0f64;
    for (r, big_r) in [(1.0, 2.0), (1.0, 4.0)] {
        let ratio = min_max_radius(&f, &a, big_r, &opts).unwrap().l / min_max_radius(&f, &a, r, &opts).unwrap().big_l;
        worst = worst.max(rel(ratio, (big_r / r) * (big_r / r)));
    }
    Outcome { pass: worst <= 1e-6, detail: format!("worst rel err {worst:.2e}") }
}

fn c6() -> Outcome {
    let maps = [
        QcMap::identity(3).unwrap(),
        QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap(),
        QcMap::radial_stretch(3, 0.5).unwrap(),
        QcMap::default_shear_bump(),
    ];
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    for m in &maps {
        let a = m.base_point(1).unwrap();
        let k = dilatation_used(m, &a, 4.0, &DilatationPolicy::default()).unwrap().k;
        for (r, big_r) in [(0.5, 1.0), (1.0, 2.0), (1.0, 4.0)] {
            let g =
                check_growth_exponent(m, &a, r, big_r, k, &MinMaxOptions::default(), &VolumeSpec::default()).unwrap();
            for x in &g.assertions {
                worst = worst.min(x.margin + x.budget);
                if !x.pass {
                    failed.push(format!("{} r={r} R={big_r}: {}", m.label(), x.name));
                }
            }
        }
    }
    Outcome {
        pass: failed.is_empty(),
        detail: format!("12 cases, worst adjusted margin {worst:.3e}{}", suffix(&failed)),
    }
}

fn c7() -> Outcome {
    let id =
        verify_main_inequality(&QcMap::identity(3).unwrap(), &Point::zeros(3), 1.0, 2.0, &VerifyOptions::default())
            .unwrap();
    let sb = QcMap::default_shear_bump();
    let a = sb.base_point(1).unwrap();
    let opts = VerifyOptions { tau_steps: 16, ..VerifyOptions::default() };
    let bump = verify_main_inequality(&sb, &a, 0.5, 2.0, &opts).unwrap();
    let line = |name: &str, r: &qplane::distortion::VerificationReport| {
        format!(
            "{name}: {:.4} <= {:.4} <= {:.4} adjusted margins {:.3e}, {:.3e}",
            r.log_lhs,
            r.log_mid,
            r.log_rhs,
            r.margin_lhs_mid + r.budget_lhs_mid,
            r.margin_mid_rhs + r.budget_mid_rhs
        )
    };
    Outcome { pass: id.pass && bump.pass, detail: format!("{}; {}", line("identity", &id), line("shear_bump", &bump)) }
}

fn c8() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let base =
        ExperimentConfig { tau_steps: 2, output_root: Some(root.path().to_path_buf()), ..ExperimentConfig::default() };
    let sweep = run_sweep(&base, SweepParam::MeshLevel, &[4.0, 5.0, 6.0]).unwrap();
    let lam: Vec<f64> = sweep.rows.iter().map(|r| r.lambda_r.unwrap()).collect();
    let ratio = sweep.rows[2].ratio_lambda_r.unwrap();
    let monotone = sweep.monotone();
    let ratio_ok = (3.0..=5.0).contains(&ratio);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let small = ExperimentConfig { mesh_level: 4, tau_steps: 2, ..base.clone() };
    let (a, b) = pool.install(|| (run_verify(&small).unwrap(), run_verify(&small).unwrap()));
    let identical = ["report.csv", "profile.csv"]
        .iter()
        .all(|f| std::fs::read(a.dir.join(f)).unwrap() == std::fs::read(b.dir.join(f)).unwrap());
    Outcome {
        pass: monotone && ratio_ok && identical,
        detail: format!(
            "lambda(r) at levels 4,5,6 = {lam:.6?}; monotone {monotone}; delta ratio {ratio:.3} (band [3,5]); byte-identical reruns {identical}"
        ),
    }
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 8] =
        [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8)];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_GAPS.contains(&id) { " [known gap]" } else { "" };
        println!("criterion {id}: {tag}{note} ({secs:.1}s) {}", o.detail);
        if !o.pass && !KNOWN_GAPS.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
