//! Experiment configuration, run directories, and report files.
//!
//! A run directory lives at `<root>/<config-hash>/run-NNN` where `<root>` is
//! the config's `output_root`, else `$QPLANE_OUTPUT_ROOT`, else `runs`.
//! Directories are never overwritten; each run takes the next free number.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::distortion::{
    verify_main_inequality, DilatationPolicy, MinMaxOptions, VerificationReport, VerifyOptions, VolumeSpec,
};
use crate::error::ReportError;
use crate::eta::SolverOptions;
use crate::geometry::{angular_resolution, MAX_LEVEL};
use crate::maps::{Point, QcMap};

/// Embedded in every output file.
pub const SCHEMA_ID: &str = "qplane.report/1";

pub const OUTPUT_ROOT_ENV: &str = "QPLANE_OUTPUT_ROOT";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Map spec in the registry grammar, e.g. `radial_stretch:alpha=2`.
    pub map: String,
    /// Dimension of the quasiplane.
    pub k: usize,
    /// Center on the quasiplane; defaults to the map's base point.
    pub center: Option<Vec<f64>>,
    pub r: f64,
    #[serde(rename = "R", alias = "big_r")]
    pub big_r: f64,
    pub tau_steps: usize,
    pub mesh_level: u32,
    pub tube_radius: f64,
    /// Rayleigh exponent; defaults to the dimension.
    pub p: Option<f64>,
    pub p_step: f64,
    pub tol: f64,
    pub seed: u64,
    pub dilatation_samples: usize,
    pub inflation: f64,
    pub mc_samples: usize,
    pub radial_nodes: usize,
    pub volume_level: u32,
    pub minmax_level: u32,
    pub minmax_starts: usize,
    pub movement_tol: f64,
    pub conform: bool,
    /// Replaces both dilatation constants (fault injection).
    pub k_override: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            map: "identity".into(),
            k: 1,
            center: None,
            r: 1.0,
            big_r: 2.0,
            tau_steps: 8,
            mesh_level: 5,
            tube_radius: 0.05,
            p: None,
            p_step: 0.25,
            tol: 1e-8,
            seed: 1,
            dilatation_samples: 100_000,
            inflation: 1.05,
            mc_samples: 200_000,
            radial_nodes: 24,
            volume_level: 4,
            minmax_level: 3,
            minmax_starts: 64,
            movement_tol: 1e-10,
            conform: true,
            k_override: None,
            output_root: None,
        }
    }
}

impl ExperimentConfig {
    /// The default shear bump around its axis point on the line.
    pub fn shear_bump_preset() -> Self {
        Self { map: "shear_bump".into(), r: 0.5, big_r: 2.0, tau_steps: 16, ..Self::default() }
    }

    /// Parse JSON (when the text starts with `{`) or flat `key = value`
    /// lines. Flat values are read as JSON when they parse, else as strings.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        Self::default().with_overrides(parse_config_map(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        Self::default().with_overrides(load_config_map(path)?)
    }

    /// Overlay keys on this config and validate the result.
    pub fn with_overrides(&self, overlay: Map<String, Value>) -> Result<Self, ReportError> {
        let mut base = match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        base.extend(overlay);
        let cfg: Self = serde_json::from_value(Value::Object(base)).map_err(|e| ReportError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: String| Err(ReportError::Config(m));
        if !(self.r > 0.0) || !(self.r < self.big_r) || !self.big_r.is_finite() {
            return bad(format!("need 0 < r < R, got r={}, R={}", self.r, self.big_r));
        }
        if self.mesh_level > MAX_LEVEL || self.volume_level > MAX_LEVEL || self.minmax_level > MAX_LEVEL {
            return bad(format!("mesh levels must be <= {MAX_LEVEL}"));
        }
        if self.mesh_level == 0 {
            return bad("mesh_level must be >= 1 (the mesh-convergence budget uses level - 1)".into());
        }
        let limit = 10.0 * angular_resolution(self.mesh_level);
        if !(self.tube_radius > 0.0) || self.tube_radius >= limit {
            return bad(format!("tube_radius must lie in (0, {limit:.4}) at mesh_level {}", self.mesh_level));
        }
        if self.tau_steps == 0 {
            return bad("tau_steps must be >= 1".into());
        }
        if let Some(p) = self.p {
            if !(p >= 2.0) {
                return bad(format!("p must be >= 2, got {p}"));
            }
        }
        if !(self.p_step > 0.0) || !(self.tol > 0.0) {
            return bad("p_step and tol must be positive".into());
        }
        if !(self.inflation >= 1.0) {
            return bad("inflation must be >= 1".into());
        }
        if self.dilatation_samples == 0 || self.radial_nodes < 2 || self.minmax_starts == 0 {
            return bad("sample and node counts must be positive".into());
        }
        if let Some(k) = self.k_override {
            if !(k >= 1.0) {
                return bad(format!("k_override must be >= 1, got {k}"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output root.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_root = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_map(&self) -> Result<QcMap, ReportError> {
        Ok(QcMap::parse(&self.map)?)
    }

    pub fn center_point(&self, map: &QcMap) -> Result<Point, ReportError> {
        match &self.center {
            Some(c) if c.len() == map.dim() => Ok(Point::from_column_slice(c)),
            Some(c) => {
                Err(ReportError::Config(format!("center has {} coordinates, map dimension is {}", c.len(), map.dim())))
            }
            None => map
                .base_point(self.k)
                .ok_or_else(|| ReportError::Config("could not locate a point on the quasiplane".into())),
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            k: self.k,
            tau_steps: self.tau_steps,
            mesh_level: self.mesh_level,
            tube_radius: self.tube_radius,
            p: self.p,
            conform: self.conform,
            solver: SolverOptions { tol: self.tol, seed: self.seed, p_step: self.p_step, ..SolverOptions::default() },
            minmax: MinMaxOptions {
                level: self.minmax_level,
                starts: self.minmax_starts,
                movement_tol: self.movement_tol,
                ..MinMaxOptions::default()
            },
            volume: VolumeSpec {
                radial_nodes: self.radial_nodes,
                level: self.volume_level,
                mc_samples: self.mc_samples,
                seed: self.seed.wrapping_add(0x5eed),
            },
            dilatation: DilatationPolicy {
                samples: self.dilatation_samples,
                seed: self.seed,
                inflation: self.inflation,
                ..DilatationPolicy::default()
            },
            k_override: self.k_override,
        }
    }

    fn output_root(&self) -> PathBuf {
        self.output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

/// Key-value map of a config text, JSON or flat.
pub fn parse_config_map(text: &str) -> Result<Map<String, Value>, ReportError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        match serde_json::from_str::<Value>(trimmed) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(ReportError::Config("JSON config must be an object".into())),
            Err(e) => Err(ReportError::Config(e.to_string())),
        }
    } else {
        parse_flat(text)
    }
}

pub fn load_config_map(path: &Path) -> Result<Map<String, Value>, ReportError> {
    let text = fs::read_to_string(path).map_err(|e| ReportError::Config(format!("{}: {e}", path.display())))?;
    parse_config_map(&text)
}

/// A raw flag or flat-file value: JSON when it parses, else a string.
pub fn flat_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn parse_flat(text: &str) -> Result<Map<String, Value>, ReportError> {
    let mut map = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ReportError::Config(format!("line {}: expected key = value", lineno + 1)));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(ReportError::Config(format!("line {}: empty key", lineno + 1)));
        }
        map.insert(key.to_string(), flat_value(v.trim()));
    }
    Ok(map)
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub config_hash: String,
    pub version: &'static str,
    pub step_seconds: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: VerificationReport,
    pub manifest: RunManifest,
    pub dir: PathBuf,
}

/// Next free `run-NNN` under `<root>/<hash16>`, created.
fn allocate_run_dir(root: &Path, hash: &str) -> Result<PathBuf, ReportError> {
    let base = root.join(&hash[..16]);
    fs::create_dir_all(&base)?;
    for i in 1..10_000 {
        let dir = base.join(format!("run-{i:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(ReportError::Config(format!("no free run directory under {}", base.display())))
}

struct Writer {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), ReportError> {
        fs::File::create(self.dir.join(name))?.write_all(bytes)?;
        let digest = Sha256::digest(bytes);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, ReportError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| ReportError::Serialize(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| ReportError::Serialize(e.to_string());
    w.write_record(header).map_err(ser)?;
    for r in rows {
        w.write_record(r).map_err(ser)?;
    }
    w.into_inner().map_err(|e| ReportError::Serialize(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column names of `report.csv`.
pub const REPORT_COLUMNS: [&str; 27] = [
    "schema",
    "config_hash",
    "map",
    "a",
    "r",
    "R",
    "n",
    "k",
    "p",
    "ko_used",
    "k_used",
    "ko_source",
    "k_source",
    "beta",
    "lambda_integral",
    "lambda_integral_budget",
    "log_lhs",
    "log_mid",
    "log_rhs",
    "margin_lhs_mid",
    "budget_lhs_mid",
    "margin_mid_rhs",
    "budget_mid_rhs",
    "pass_lhs_mid",
    "pass_mid_rhs",
    "pass",
    "flags",
];

fn source_label(p: &crate::distortion::Provenance) -> String {
    match p {
        crate::distortion::Provenance::Declared => "declared".into(),
        crate::distortion::Provenance::Sampled { estimate, inflation, .. } => {
            format!("sampled {estimate} x {inflation}")
        }
    }
}

fn report_row(hash: &str, r: &VerificationReport) -> Vec<String> {
    let a = r.a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    vec![
        SCHEMA_ID.into(),
        hash.into(),
        r.map.clone(),
        a,
        r.r.to_string(),
        r.big_r.to_string(),
        r.n.to_string(),
        r.k.to_string(),
        r.p.to_string(),
        r.ko_used.to_string(),
        r.k_used.to_string(),
        source_label(&r.ko_source),
        source_label(&r.k_source),
        r.beta.to_string(),
        r.lambda_integral.to_string(),
        r.lambda_integral_budget.to_string(),
        r.log_lhs.to_string(),
        r.log_mid.to_string(),
        r.log_rhs.to_string(),
        r.margin_lhs_mid.to_string(),
        r.budget_lhs_mid.to_string(),
        r.margin_mid_rhs.to_string(),
        r.budget_mid_rhs.to_string(),
        r.pass_lhs_mid.to_string(),
        r.pass_mid_rhs.to_string(),
        r.pass.to_string(),
        r.flags.join("; "),
    ]
}

const GNUPLOT: &str = "\
set xlabel 'tau'
set ylabel 'lambda'
set key off
set grid
plot 'lambda_profile.dat' using 1:2 with linespoints pt 7
pause -1
";

#[derive(Serialize)]
struct ReportFile<'a> {
    schema: &'static str,
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    report: &'a VerificationReport,
}

#[derive(Serialize)]
struct SolveRecord {
    schema: &'static str,
    tau: f64,
    level: u32,
    tube_radius: Option<f64>,
    p: f64,
    lambda: f64,
    iterations: usize,
    residual: f64,
    trusted: bool,
    wall_seconds: f64,
}

/// Validate, run the full verification, and write the run directory.
pub fn run_verify(config: &ExperimentConfig) -> Result<RunOutcome, ReportError> {
    config.validate()?;
    let map = config.build_map()?;
    let a = config.center_point(&map)?;
    let report = verify_main_inequality(&map, &a, config.r, config.big_r, &config.verify_options())
        .map_err(|source| ReportError::Step { step: "verify_main_inequality", source })?;
    write_run(config, report)
}

fn write_run(config: &ExperimentConfig, report: VerificationReport) -> Result<RunOutcome, ReportError> {
    let clock = Instant::now();
    let hash = config.hash();
    let dir = allocate_run_dir(&config.output_root(), &hash)?;
    let mut w = Writer { dir: dir.clone(), files: Vec::new() };

    w.put("report.json", &json_bytes(&ReportFile { schema: SCHEMA_ID, config_hash: &hash, config, report: &report })?)?;
    w.put("report.csv", &csv_bytes(&REPORT_COLUMNS, &[report_row(&hash, &report)])?)?;

    let profile: Vec<Vec<String>> = report
        .profile
        .rows
        .iter()
        .map(|row| {
            vec![
                SCHEMA_ID.to_string(),
                row.tau.to_string(),
                opt(row.lambda),
                opt(row.lambda_coarse),
                row.l.to_string(),
                row.big_l.to_string(),
                row.v.to_string(),
                row.flags.join("; "),
            ]
        })
        .collect();
    w.put("profile.csv", &csv_bytes(&["schema", "tau", "lambda", "lambda_coarse", "l", "L", "V", "flags"], &profile)?)?;

    let mut dat = format!("# {SCHEMA_ID} {hash}\n# tau lambda\n");
    for row in &report.profile.rows {
        if let Some(l) = row.lambda {
            dat.push_str(&format!("{} {}\n", row.tau, l));
        }
    }
    w.put("lambda_profile.dat", dat.as_bytes())?;
    w.put("plot_lambda.gp", format!("# {SCHEMA_ID}\n{GNUPLOT}").as_bytes())?;

    let mut jsonl = Vec::new();
    for row in &report.profile.solves {
        if let Some(e) = &row.estimate {
            let rec = SolveRecord {
                schema: SCHEMA_ID,
                tau: row.tau,
                level: e.mesh_level,
                tube_radius: e.tube_radius,
                p: e.p,
                lambda: e.lambda,
                iterations: e.iterations,
                residual: e.residual,
                trusted: e.trusted,
                wall_seconds: e.wall_seconds,
            };
            serde_json::to_writer(&mut jsonl, &rec).map_err(|e| ReportError::Serialize(e.to_string()))?;
            jsonl.push(b'\n');
        }
    }
    w.put("solver_diagnostics.jsonl", &jsonl)?;

    let mut step_seconds: BTreeMap<String, f64> =
        report.step_seconds.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    step_seconds.insert("write".into(), clock.elapsed().as_secs_f64());
    let manifest = RunManifest {
        schema: SCHEMA_ID,
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION"),
        step_seconds,
        files: w.files.clone(),
    };
    fs::write(dir.join("manifest.json"), json_bytes(&manifest)?)?;
    Ok(RunOutcome { report, manifest, dir })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    MeshLevel,
    TubeRadius,
    TauSteps,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self, ReportError> {
        match s {
            "mesh_level" => Ok(Self::MeshLevel),
            "tube_radius" => Ok(Self::TubeRadius),
            "tau_steps" | "tau_grid" => Ok(Self::TauSteps),
            _ => Err(ReportError::Config(format!("unknown sweep parameter {s:?}"))),
        }
    }

    fn key(self) -> &'static str {
        match self {
            Self::MeshLevel => "mesh_level",
            Self::TubeRadius => "tube_radius",
            Self::TauSteps => "tau_steps",
        }
    }

    fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, ReportError> {
        let integral = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(ReportError::Config(format!("{} needs integer values, got {v}", self.key())))
            }
        };
        let mut c = base.clone();
        match self {
            Self::MeshLevel => c.mesh_level = integral(value)? as u32,
            Self::TubeRadius => c.tube_radius = value,
            Self::TauSteps => c.tau_steps = integral(value)? as usize,
        }
        c.validate()?;
        Ok(c)
    }
}

/// One row of the convergence table. Deltas compare with the previous value.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// lambda on the innermost sphere `S(a, r)`.
    pub lambda_r: Option<f64>,
    pub lambda_integral: f64,
    pub delta_lambda_r: Option<f64>,
    /// Ratio of the previous delta to this one.
    pub ratio_lambda_r: Option<f64>,
    pub delta_integral: Option<f64>,
    pub integral_budget: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunOutcome>,
    pub table_path: PathBuf,
}

impl SweepOutcome {
    /// All deltas of `lambda(r)` share one sign.
    pub fn monotone(&self) -> bool {
        let d: Vec<f64> = self.rows.iter().filter_map(|r| r.delta_lambda_r).collect();
        d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0)
    }
}

/// Run the base config once per value of `param` and tabulate deltas.
pub fn run_sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepOutcome, ReportError> {
    if values.len() < 2 {
        return Err(ReportError::Config("a sweep needs at least two values".into()));
    }
    let configs = values.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>, _>>()?;
    let mut runs = Vec::with_capacity(configs.len());
    for c in &configs {
        runs.push(run_verify(c)?);
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let rep = &run.report;
        let lambda_r = rep.profile.rows.first().and_then(|r| r.lambda);
        let prev = i.checked_sub(1).map(|j| &rows[j]);
        let delta_lambda_r = prev.and_then(|p| Some(lambda_r? - p.lambda_r?));
        let ratio_lambda_r = prev.and_then(|p| Some(p.delta_lambda_r? / delta_lambda_r?));
        let delta_integral = prev.map(|p| rep.lambda_integral - p.lambda_integral);
        rows.push(SweepRow {
            value: values[i],
            lambda_r,
            lambda_integral: rep.lambda_integral,
            delta_lambda_r,
            ratio_lambda_r,
            delta_integral,
            integral_budget: rep.lambda_integral_budget,
            pass: rep.pass,
        });
    }
    let mut sweep_base = base.clone();
    sweep_base.output_root = None;
    let tag: String = {
        let json = serde_json::to_string(&(SCHEMA_ID, &sweep_base, param, values)).expect("sweep serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    };
    let dir = allocate_run_dir(&base.output_root().join("sweeps"), &tag)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                SCHEMA_ID.to_string(),
                r.value.to_string(),
                opt(r.lambda_r),
                r.lambda_integral.to_string(),
                opt(r.delta_lambda_r),
                opt(r.ratio_lambda_r),
                opt(r.delta_integral),
                r.integral_budget.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect();
    let header = [
        "schema",
        param.key(),
        "lambda_r",
        "lambda_integral",
        "delta_lambda_r",
        "ratio_lambda_r",
        "delta_integral",
        "integral_budget",
        "pass",
    ];
    let table_path = dir.join("sweep.csv");
    fs::write(&table_path, csv_bytes(&header, &table)?)?;
    let listing: Vec<String> = runs.iter().map(|r| r.dir.display().to_string()).collect();
    fs::write(
        dir.join("sweep.json"),
        json_bytes(
            &serde_json::json!({ "schema": SCHEMA_ID, "param": param, "values": values, "rows": rows, "runs": listing }),
        )?,
    )?;
    Ok(SweepOutcome { param, rows, runs, table_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_configs_agree() {
        let flat = "# comment\nmap = radial_stretch:alpha=0.5\nr = 0.5\nR = 3\nconform = false\ncenter = [0, 0, 0]\n";
        let json = r#"{"map": "radial_stretch:alpha=0.5", "r": 0.5, "R": 3, "conform": false, "center": [0,0,0]}"#;
        let a = ExperimentConfig::parse(flat).unwrap();
        let b = ExperimentConfig::parse(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.big_r, 3.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            "r = 2\nR = 1",
            "mesh_level = 9",
            "tube_radius = 5",
            "tube_radius = 0",
            "bogus = 1",
            "r 1",
            "{\"r\": \"x\"}",
            "tau_steps = 0",
            "p = 1.5",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(ReportError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_root_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { output_root: Some("/tmp/x".into()), ..a.clone() };
        let c = ExperimentConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::default().with_overrides(parse_config_map("R = 4\nmap = identity").unwrap()).unwrap();
        assert_eq!(c.big_r, 4.0);
        assert!(ExperimentConfig::default().with_overrides(parse_config_map("r = 3").unwrap()).is_err());
        assert!(parse_config_map("[1, 2]").is_err());
    }

    #[test]
    fn sweep_param_validation() {
        assert!(SweepParam::parse("mesh_level").is_ok());
        assert!(SweepParam::parse("colour").is_err());
        assert!(SweepParam::MeshLevel.apply(&ExperimentConfig::default(), 4.5).is_err());
        assert!(run_sweep(&ExperimentConfig::default(), SweepParam::MeshLevel, &[4.0]).is_err());
    }
}
