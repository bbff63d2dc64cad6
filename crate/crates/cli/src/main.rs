//! `qplane`: command-line front end.
//!
//! Exit codes: 0 when every assertion holds, 1 when a mathematical assertion
//! fails beyond its budget, 2 on usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use qplane::distortion::{
    capacity_energy_check, capacity_round_ring, check_growth_exponent, dilatation_used, Provenance, VerificationReport,
};
use qplane::eta::{estimate_lambda, trace_mesh, ProfileSpec};
use qplane::inequalities::run_property_suite;
use qplane::maps::{estimate_dilatations, registry, Ball};
use qplane::report::{load_config_map, run_sweep, run_verify, ExperimentConfig, SweepParam};
use qplane::{build_sphere_mesh, DistortionError, MarkOptions, ReportError, SolverError, Sphere, Vec3};

#[derive(Parser)]
#[command(name = "qplane", version, about = "Numerical checks of the quasiplane variational inequality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Built-in maps and their dilatations.
    Maps {
        #[command(subcommand)]
        action: MapsAction,
    },
    /// First p-Rayleigh quotient on a sphere minus the quasiplane trace.
    Eta(EtaArgs),
    /// Radial distortion and volume growth inequalities.
    Distortion(RunArgs),
    /// Capacity of a round ring, closed form against quadrature.
    Capacity(CapacityArgs),
    /// Full verification of the main inequality chain; writes a run directory.
    VerifyMain(RunArgs),
    /// Random-matrix property suite for the pointwise estimates.
    MatrixProps(MatrixArgs),
    /// Convergence sweep over one parameter.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum MapsAction {
    List,
    /// Declared and sampled dilatations of one map.
    Show {
        #[arg(long)]
        map: String,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Flags mirroring the experiment config keys. A `--config` file wins over
/// flags; `--set key=value` reaches any other key.
#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    map: Option<String>,
    /// Comma-separated coordinates; defaults to the map's base point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Option<Vec<f64>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "R", alias = "big-r")]
    big_r: Option<f64>,
    #[arg(long)]
    tau_steps: Option<usize>,
    #[arg(long)]
    mesh_level: Option<u32>,
    #[arg(long)]
    tube_radius: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace both dilatation constants (fault injection).
    #[arg(long)]
    k_override: Option<f64>,
    #[arg(long)]
    output_root: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EtaArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sphere radius; defaults to r.
    #[arg(long)]
    tau: Option<f64>,
    /// Solve on a spherical cap of this angular radius instead of the trace.
    #[arg(long)]
    cap: Option<f64>,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "R", alias = "big-r")]
    big_r: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityConfig {
    n: usize,
    r: f64,
    #[serde(rename = "R", alias = "big_r")]
    big_r: f64,
    nodes: usize,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixConfig {
    trials: usize,
    seed: u64,
    dims: Vec<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// One of mesh_level, tube_radius, tau_steps.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

enum CliError {
    Usage(String),
    Math(String),
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        if e.is_math_failure() {
            CliError::Math(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<DistortionError> for CliError {
    fn from(e: DistortionError) -> Self {
        match e {
            DistortionError::Discrepancy { .. } | DistortionError::BudgetExhausted { .. } => {
                CliError::Math(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Outcome of a command that ran to completion.
type Verdict = Result<bool, CliError>;

fn layered<T: Serialize + DeserializeOwned>(
    base: T,
    flags: Map<String, Value>,
    config: Option<&Path>,
) -> Result<T, CliError> {
    let Value::Object(mut merged) = serde_json::to_value(base).map_err(|e| CliError::Usage(e.to_string()))? else {
        unreachable!("configs serialize to objects")
    };
    merged.extend(flags);
    if let Some(path) = config {
        merged.extend(load_config_map(path)?);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn put<T: Serialize>(m: &mut Map<String, Value>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        m.insert(key.into(), json!(v));
    }
}

impl RunArgs {
    fn experiment(&self, base: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut m = Map::new();
        put(&mut m, "map", &self.map);
        put(&mut m, "center", &self.center);
        put(&mut m, "k", &self.k);
        put(&mut m, "r", &self.r);
        put(&mut m, "R", &self.big_r);
        put(&mut m, "tau_steps", &self.tau_steps);
        put(&mut m, "mesh_level", &self.mesh_level);
        put(&mut m, "tube_radius", &self.tube_radius);
        put(&mut m, "p", &self.p);
        put(&mut m, "seed", &self.seed);
        put(&mut m, "k_override", &self.k_override);
        put(&mut m, "output_root", &self.output_root);
        for kv in &self.set {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            m.insert(k.trim().into(), qplane::report::flat_value(v.trim()));
        }
        let cfg = layered(base, m, self.config.as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn source(p: &Provenance) -> String {
    match p {
        Provenance::Declared => "declared".into(),
        Provenance::Sampled { estimate, inflation, samples, .. } => {
            format!("sampled {estimate:.6} x {inflation} over {samples} points")
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn maps(action: MapsAction) -> Verdict {
    match action {
        MapsAction::List => {
            for (id, params) in registry() {
                println!("{id:<16} {params}");
            }
        }
        MapsAction::Show { map, radius, samples, seed } => {
            let f = qplane::QcMap::parse(&map).map_err(|e| CliError::Usage(e.to_string()))?;
            let declared = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_else(|| "-".into());
            println!("map {}  n = {}  invertible {}", f.label(), f.dim(), f.has_inverse());
            println!(
                "declared K_O {}  K_I {}  K {}",
                declared(f.declared_ko()),
                declared(f.declared_ki()),
                declared(f.declared_k())
            );
            let a = f.base_point(1).unwrap_or_else(|| qplane::Point::zeros(f.dim()));
            let ball = Ball { center: a.iter().copied().collect(), radius };
            let e = estimate_dilatations(&f, &ball, samples, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            println!("sampled K_O {:.6}  K_I {:.6}  K {:.6}  over {}", e.ko_est, e.ki_est, e.k_est, e.domain);
        }
    }
    Ok(true)
}

fn eta(args: EtaArgs) -> Verdict {
    let cfg = args.run.experiment(ExperimentConfig::default())?;
    let tau = args.tau.unwrap_or(cfg.r);
    let p = cfg.p.unwrap_or(3.0);
    let mesh = if let Some(theta) = args.cap {
        build_sphere_mesh(&Sphere::new(Vec3::zeros(), tau).map_err(|e| CliError::Usage(e.to_string()))?, cfg.mesh_level)
            .and_then(|m| m.mark_cap(&Vec3::x(), theta, &MarkOptions::default()))
            .map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        let map = cfg.build_map()?;
        let a = cfg.center_point(&map)?;
        let off = map.perp_norm(&a, cfg.k);
        if off > 1e-9 {
            return Err(SolverError::CenterOffPlane(off).into());
        }
        let spec =
            ProfileSpec { k: cfg.k, mesh_level: cfg.mesh_level, tube_radius: cfg.tube_radius, p, conform: cfg.conform };
        trace_mesh(&map, &a, tau, &spec)?
    };
    let est = estimate_lambda(&mesh, p, &cfg.verify_options().solver)?;
    println!(
        "lambda = {:.10}  p = {p}  tau = {tau}  level {}  vertices {} (pinned {})",
        est.lambda,
        cfg.mesh_level,
        mesh.n_vertices(),
        mesh.dirichlet_count()
    );
    println!(
        "iterations {}  residual {:.3e}  trusted {}  {:.2}s",
        est.iterations, est.residual, est.trusted, est.wall_seconds
    );
    if let Some(theta) = args.cap {
        println!("lambda * theta = {:.6}", est.lambda * theta * tau);
    }
    println!("{}", verdict(est.trusted));
    Ok(est.trusted)
}

fn distortion(args: RunArgs) -> Verdict {
    let cfg = args.experiment(ExperimentConfig::default())?;
    let map = cfg.build_map()?;
    let a = cfg.center_point(&map)?;
    let opts = cfg.verify_options();
    let k = match cfg.k_override {
        Some(k) => k,
        None => dilatation_used(&map, &a, cfg.big_r, &opts.dilatation)?.k,
    };
    let g = check_growth_exponent(&map, &a, cfg.r, cfg.big_r, k, &opts.minmax, &opts.volume)?;
    println!(
        "map {}  r = {}  R = {}  K = {k}  beta = {:.6}  ln D* = {:.6}",
        map.label(),
        cfg.r,
        cfg.big_r,
        g.beta,
        g.log_dstar
    );
    println!(
        "l(r) {:.10}  L(r) {:.10}  l(R) {:.10}  L(R) {:.10}",
        g.at_r.l, g.at_r.big_l, g.at_big_r.l, g.at_big_r.big_l
    );
    println!("V(r) {:.10}  V(R) {:.10}", g.v_r.value, g.v_big_r.value);
    for x in &g.assertions {
        println!(
            "{:<40} log lhs {:>12.6} log rhs {:>12.6} margin {:>11.3e} budget {:.1e} {}",
            x.name,
            x.log_lhs,
            x.log_rhs,
            x.margin,
            x.budget,
            verdict(x.pass)
        );
    }
    println!("{}", verdict(g.pass()));
    Ok(g.pass())
}

fn capacity(args: CapacityArgs) -> Verdict {
    let mut m = Map::new();
    put(&mut m, "n", &args.n);
    put(&mut m, "r", &args.r);
    put(&mut m, "R", &args.big_r);
    put(&mut m, "nodes", &args.nodes);
    let c: CapacityConfig =
        layered(CapacityConfig { n: 3, r: 1.0, big_r: std::f64::consts::E, nodes: 16 }, m, args.config.as_deref())?;
    let exact = capacity_round_ring(c.n, c.r, c.big_r)?;
    let energy = capacity_energy_check(c.n, c.r, c.big_r, c.nodes)?;
    let rel = ((energy - exact) / exact).abs();
    println!("capacity = {exact:.10}");
    println!("energy quadrature = {energy:.10}  relative difference {rel:.2e}");
    let ok = rel <= 1e-8;
    println!("{}", verdict(ok));
    Ok(ok)
}

fn matrix_props(args: MatrixArgs) -> Verdict {
    let mut m = Map::new();
    put(&mut m, "trials", &args.trials);
    put(&mut m, "seed", &args.seed);
    put(&mut m, "dims", &args.dims);
    let c: MatrixConfig =
        layered(MatrixConfig { trials: 1000, seed: 7, dims: vec![3, 4, 5] }, m, args.config.as_deref())?;
    if c.dims.iter().any(|&n| n < 3) {
        return Err(CliError::Usage("dims must be >= 3".into()));
    }
    let mut total = 0;
    for &n in &c.dims {
        for k in 1..=n - 2 {
            let s = run_property_suite(n, k, c.trials, c.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            for t in &s.checks {
                if t.violations > 0 {
                    println!(
                        "n={n} k={k} {:<26} {} of {} violated, worst slack {:.3e}",
                        t.name, t.violations, t.evaluated, t.worst_slack
                    );
                }
            }
            total += s.violations();
        }
    }
    println!("{total} violations");
    Ok(total == 0)
}

fn print_chain(rep: &VerificationReport) {
    let a: Vec<String> = rep.a.iter().map(|x| format!("{x}")).collect();
    println!(
        "map {}  a = ({})  r = {}  R = {}  n = {}  k = {}  p = {}",
        rep.map,
        a.join(", "),
        rep.r,
        rep.big_r,
        rep.n,
        rep.k,
        rep.p
    );
    println!(
        "K_O = {} ({})  K = {} ({})  beta = {}",
        rep.ko_used,
        source(&rep.ko_source),
        rep.k_used,
        source(&rep.k_source),
        rep.beta
    );
    println!("ln lhs = (1/K_O) int lambda = {:.10}  (integral budget {:.2e})", rep.log_lhs, rep.lambda_integral_budget);
    println!("ln mid = ln V(R)/V(r)        = {:.10}", rep.log_mid);
    println!("ln rhs = ln D*^2n (R/r)^nb   = {:.10}", rep.log_rhs);
    println!(
        "lhs <= mid: margin {:.4e} budget {:.2e} {}",
        rep.margin_lhs_mid,
        rep.budget_lhs_mid,
        verdict(rep.pass_lhs_mid)
    );
    println!(
        "mid <= rhs: margin {:.4e} budget {:.2e} {}",
        rep.margin_mid_rhs,
        rep.budget_mid_rhs,
        verdict(rep.pass_mid_rhs)
    );
    if !rep.flags.is_empty() {
        println!("flags: {}", rep.flags.join("; "));
    }
}

fn verify_main(args: RunArgs) -> Verdict {
    let cfg = args.experiment(ExperimentConfig::default())?;
    let out = run_verify(&cfg)?;
    print_chain(&out.report);
    println!("run directory {}", out.dir.display());
    println!("{}", verdict(out.report.pass));
    Ok(out.report.pass)
}

fn sweep(args: SweepArgs) -> Verdict {
    let cfg = args.run.experiment(ExperimentConfig::default())?;
    let param = SweepParam::parse(&args.param)?;
    let out = run_sweep(&cfg, param, &args.values)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_else(|| "-".into());
    println!(
        "{:>10} {:>12} {:>14} {:>12} {:>8} {:>12} {:>10}",
        args.param, "lambda(r)", "int lambda", "delta", "ratio", "delta int", "pass"
    );
    for r in &out.rows {
        println!(
            "{:>10} {:>12} {:>14.8} {:>12} {:>8} {:>12} {:>10}",
            r.value,
            fmt(r.lambda_r),
            r.lambda_integral,
            fmt(r.delta_lambda_r),
            r.ratio_lambda_r.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
            fmt(r.delta_integral),
            r.pass
        );
    }
    println!("monotone {}  table {}", out.monotone(), out.table_path.display());
    let ok = out.rows.iter().all(|r| r.pass);
    println!("{}", verdict(ok));
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Maps { action } => maps(action),
        Command::Eta(a) => eta(a),
        Command::Distortion(a) => distortion(a),
        Command::Capacity(a) => capacity(a),
        Command::VerifyMain(a) => verify_main(a),
        Command::MatrixProps(a) => matrix_props(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Math(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
