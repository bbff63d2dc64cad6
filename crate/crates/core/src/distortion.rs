//! Distortion and growth quantities of a quasiconformal map around a point:
//! the extremal image radii `l(a,t)`, `L(a,t)`, the volume growth `V(a,r)`,
//! the distortion constant `D_*(K)`, round-ring capacities, and the chains of
//! inequalities that lead to the growth bound for quasiplanes.
//!
//! Large constants are handled in log space: `D_*(4)^6` alone is far beyond
//! the range of `f64`.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DistortionError, SolverError};
use crate::eta::{lambda_radial_profile, LambdaRow, ProfileSpec, SolverOptions};
use crate::geometry::{build_sphere_mesh, Sphere, Vec3};
use crate::maps::{estimate_dilatations, sample_unit_ball, Ball, Point, QcMap};
use crate::quadrature::{gauss_legendre, trapezoid, unit_ball_volume, unit_sphere_area};

/// Smallest budget attached to any computed term (log scale). Covers
/// rounding in quantities that are exact in closed form.
pub const BUDGET_FLOOR: f64 = 1e-12;

/// `ln D_*(K) = 4 K (K+1) sqrt(K-1)`.
pub fn log_dstar(k: f64) -> Result<f64, DistortionError> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(DistortionError::BadDilatation(k));
    }
    Ok(4.0 * k * (k + 1.0) * (k - 1.0).sqrt())
}

/// `D_*(K) = exp(4 K (K+1) sqrt(K-1))`; `+inf` once it leaves `f64` range.
pub fn dstar(k: f64) -> Result<f64, DistortionError> {
    Ok(log_dstar(k)?.exp())
}

/// `beta = K^(1/(n-1))`.
pub fn beta(n: usize, k: f64) -> Result<f64, DistortionError> {
    if n < 2 {
        return Err(DistortionError::UnsupportedDimension(n));
    }
    if !(k >= 1.0) || !k.is_finite() {
        return Err(DistortionError::BadDilatation(k));
    }
    Ok(k.powf(1.0 / (n as f64 - 1.0)))
}

fn check_radii(r: f64, big_r: f64) -> Result<(), DistortionError> {
    if !(r > 0.0) || !(big_r > r) || !big_r.is_finite() {
        return Err(DistortionError::BadRadii { r, big_r });
    }
    Ok(())
}

/// `ln( D_*^(2n) (R/r)^(n beta) )`.
pub fn log_main_bound(n: usize, k: f64, r: f64, big_r: f64) -> Result<f64, DistortionError> {
    check_radii(r, big_r)?;
    let nf = n as f64;
    Ok(2.0 * nf * log_dstar(k)? + nf * beta(n, k)? * (big_r / r).ln())
}

/// `D_*^(2n) (R/r)^(n beta)`; `+inf` when it overflows.
pub fn main_bound(n: usize, k: f64, r: f64, big_r: f64) -> Result<f64, DistortionError> {
    Ok(log_main_bound(n, k, r, big_r)?.exp())
}

/// `omega_{n-1} (ln R/r)^(1-n)`, the n-capacity of the round ring
/// `B(R) \ closure B(r)`.
pub fn capacity_round_ring(n: usize, r: f64, big_r: f64) -> Result<f64, DistortionError> {
    if n < 2 {
        return Err(DistortionError::UnsupportedDimension(n));
    }
    check_radii(r, big_r)?;
    Ok(unit_sphere_area(n) * (big_r / r).ln().powf(1.0 - n as f64))
}

/// n-energy of the radial extremal `u = ln(R/|x|) / ln(R/r)`, integrated
/// numerically over the ring: composite Gauss-Legendre on geometric panels
/// (ratio at most 2) with `nodes` points per panel.
pub fn capacity_energy_check(n: usize, r: f64, big_r: f64, nodes: usize) -> Result<f64, DistortionError> {
    if n < 2 {
        return Err(DistortionError::UnsupportedDimension(n));
    }
    check_radii(r, big_r)?;
    let log_ratio = (big_r / r).ln();
    let nf = n as f64;
    let grad = |rho: f64| 1.0 / (rho * log_ratio);
    let integrand = |rho: f64| rho.powf(nf - 1.0) * grad(rho).powf(nf);
    let panels = (log_ratio / 2f64.ln()).ceil().max(1.0) as usize;
    let q = (big_r / r).powf(1.0 / panels as f64);
    let (x, w) = gauss_legendre(nodes.max(1));
    let mut total = 0.0;
    let mut lo = r;
    for i in 0..panels {
        let hi = if i + 1 == panels { big_r } else { lo * q };
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        total += half * x.iter().zip(&w).map(|(xi, wi)| wi * integrand(mid + half * xi)).sum::<f64>();
        lo = hi;
    }
    Ok(unit_sphere_area(n) * total)
}

#[derive(Clone, Debug, Serialize)]
pub struct MinMaxOptions {
    /// Sphere mesh level of the sampling stage.
    pub level: u32,
    /// Local refinements started from the best vertices, per extremum.
    pub starts: usize,
    /// Angular movement at which a local search counts as converged.
    pub movement_tol: f64,
    pub max_iter: usize,
}

impl Default for MinMaxOptions {
    fn default() -> Self {
        Self { level: 3, starts: 64, movement_tol: 1e-10, max_iter: 5000 }
    }
}

/// Extremal image radii over `S(a, t)`. `l` is an upper bound of the true
/// minimum and `big_l` a lower bound of the true maximum (both are attained
/// values of sampled points).
#[derive(Clone, Debug, Serialize)]
pub struct MinMax {
    pub t: f64,
    pub l: f64,
    pub big_l: f64,
    pub argmin: [f64; 3],
    pub argmax: [f64; 3],
    pub iterations: usize,
    /// Relative uncertainty of each value from the movement tolerance.
    pub rel_budget: f64,
}

fn to_point(v: &Vec3) -> Point {
    Point::from_column_slice(v.as_slice())
}

/// `l(a,t)` and `L(a,t)`: dense sampling on a sphere mesh, then projected
/// gradient descent (ascent) on the sphere from the `starts` best vertices.
pub fn min_max_radius(map: &QcMap, a: &Point, t: f64, opts: &MinMaxOptions) -> Result<MinMax, DistortionError> {
    if map.dim() != 3 || a.len() != 3 {
        return Err(DistortionError::UnsupportedDimension(map.dim()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(DistortionError::NonPositiveRadius(t));
    }
    let center = Vec3::new(a[0], a[1], a[2]);
    let fa = map.eval(a);
    let value = |w: &Vec3| (map.eval(&to_point(&(center + w * t))) - &fa).norm();
    let mesh = build_sphere_mesh(&Sphere::unit(), opts.level)?;
    let mut ranked: Vec<(f64, usize)> = mesh.vertices().iter().enumerate().map(|(i, w)| (value(w), i)).collect();
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let starts = opts.starts.clamp(1, ranked.len());
    let lows: Vec<Vec3> = ranked[..starts].iter().map(|&(_, i)| mesh.vertices()[i]).collect();
    let highs: Vec<Vec3> = ranked[ranked.len() - starts..].iter().rev().map(|&(_, i)| mesh.vertices()[i]).collect();

    let search = |start: &Vec3, sign: f64| -> Result<(f64, Vec3, usize), DistortionError> {
        local_extremum(map, &center, &fa, t, start, sign, opts)
    };
    let mins = lows.par_iter().map(|w| search(w, 1.0)).collect::<Result<Vec<_>, _>>()?;
    let maxs = highs.par_iter().map(|w| search(w, -1.0)).collect::<Result<Vec<_>, _>>()?;
    let best_min = mins.iter().min_by(|x, y| x.0.total_cmp(&y.0)).expect("at least one start");
    let best_max = maxs.iter().max_by(|x, y| x.0.total_cmp(&y.0)).expect("at least one start");
    let iterations = mins.iter().chain(&maxs).map(|m| m.2).sum();
    let pos = |w: &Vec3| {
        let x = center + w * t;
        [x[0], x[1], x[2]]
    };
    Ok(MinMax {
        t,
        l: best_min.0,
        big_l: best_max.0,
        argmin: pos(&best_min.1),
        argmax: pos(&best_max.1),
        iterations,
        rel_budget: opts.movement_tol,
    })
}

/// Minimize `sign * |f(a + t w) - f(a)|` over unit `w` from `start`.
fn local_extremum(
    map: &QcMap,
    center: &Vec3,
    fa: &Point,
    t: f64,
    start: &Vec3,
    sign: f64,
    opts: &MinMaxOptions,
) -> Result<(f64, Vec3, usize), DistortionError> {
    let value = |w: &Vec3| (map.eval(&to_point(&(center + w * t))) - fa).norm();
    let mut w = *start;
    let mut v = value(&w);
    let mut step: f64 = 0.1;
    for it in 0..opts.max_iter {
        let x = to_point(&(center + w * t));
        let Some(jac) = map.jacobian(&x) else {
            return Ok((v, w, it));
        };
        let diff = map.eval(&x) - fa;
        if v == 0.0 {
            return Ok((v, w, it));
        }
        // d|f - f(a)|/dw = t J^T (f - f(a)) / |f - f(a)|
        let g = jac.transpose() * &diff * (t / v);
        let g = Vec3::new(g[0], g[1], g[2]);
        let tangent = (g - w * w.dot(&g)) * sign;
        let gnorm = tangent.norm();
        if gnorm * v.max(1e-300).recip() < opts.movement_tol {
            return Ok((v, w, it));
        }
        let dir = -tangent / gnorm;
        // backtracking along the great circle, step measured in angle
        let mut s = (2.0 * step).min(0.5);
        loop {
            let trial = (w * s.cos() + dir * s.sin()).normalize();
            let tv = value(&trial);
            if sign * (tv - v) <= -1e-4 * s * gnorm {
                w = trial;
                v = tv;
                step = s;
                break;
            }
            s *= 0.5;
            if s < opts.movement_tol {
                return Ok((v, w, it));
            }
        }
        if step < opts.movement_tol {
            return Ok((v, w, it));
        }
    }
    Err(DistortionError::BudgetExhausted { movement: step, tol: opts.movement_tol })
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeSpec {
    /// Gauss-Legendre nodes in the radial variable.
    pub radial_nodes: usize,
    /// Sphere mesh level of the angular rule.
    pub level: u32,
    /// Monte Carlo samples of the cross-check; 0 skips it.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for VolumeSpec {
    fn default() -> Self {
        Self { radial_nodes: 24, level: 4, mc_samples: 200_000, seed: 7 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeEstimate {
    pub r: f64,
    pub value: f64,
    /// Same rule with half the radial nodes and one mesh level less.
    pub coarse: f64,
    /// `|value - coarse|` plus a rounding floor.
    pub budget: f64,
    pub mc_value: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub discrepancy: Option<f64>,
}

/// Angular rule on the unit sphere: triangle barycenters (projected) with
/// area weights summing to `4 pi`.
fn angular_rule(level: u32) -> Result<(Vec<Vec3>, Vec<f64>), DistortionError> {
    let mesh = build_sphere_mesh(&Sphere::unit(), level)?;
    let areas = mesh.triangle_areas();
    let total: f64 = areas.iter().sum();
    let nodes = (0..mesh.n_triangles()).map(|t| mesh.barycenter(t).normalize()).collect();
    let weights = areas.iter().map(|a| a * 4.0 * PI / total).collect();
    Ok((nodes, weights))
}

fn jacobian_det(map: &QcMap, x: &Point) -> Result<f64, DistortionError> {
    match map.jacobian(x) {
        Some(j) => {
            let d = j.determinant();
            if d > 0.0 {
                Ok(d)
            } else {
                Err(DistortionError::NonPositiveJacobian(d))
            }
        }
        // singular points are isolated for the built-in maps
        None => Ok(0.0),
    }
}

/// `int_{B(a,r)} J` by the product rule with `rho = r u^2`, which keeps
/// the integrand smooth for radial powers `|x|^(3 alpha - 3)`.
fn volume_rule(map: &QcMap, a: &Point, r: f64, radial_nodes: usize, level: u32) -> Result<f64, DistortionError> {
    let center = Vec3::new(a[0], a[1], a[2]);
    let (dirs, weights) = angular_rule(level)?;
    let (u, wu) = gauss_legendre(radial_nodes);
    let shells = u
        .par_iter()
        .zip(wu.par_iter())
        .map(|(&ui, &wi)| {
            let uu = 0.5 * (ui + 1.0);
            let rho = r * uu * uu;
            // rho^2 drho = 2 r^3 u^5 du on [0, 1]
            let jac = 0.5 * wi * 2.0 * r.powi(3) * uu.powi(5);
            let mut s = 0.0;
            for (w, q) in dirs.iter().zip(&weights) {
                s += q * jacobian_det(map, &to_point(&(center + w * rho)))?;
            }
            Ok(jac * s)
        })
        .collect::<Result<Vec<f64>, DistortionError>>()?;
    Ok(shells.iter().sum())
}

/// `V(a, r) = int_{B(a,r)} J(x, f) dx` with a coarse-rule budget and a
/// Monte Carlo cross-check.
pub fn volume_growth(map: &QcMap, a: &Point, r: f64, spec: &VolumeSpec) -> Result<VolumeEstimate, DistortionError> {
    if map.dim() != 3 || a.len() != 3 {
        return Err(DistortionError::UnsupportedDimension(map.dim()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(DistortionError::NonPositiveRadius(r));
    }
    let value = volume_rule(map, a, r, spec.radial_nodes, spec.level)?;
    let coarse = volume_rule(map, a, r, (spec.radial_nodes / 2).max(2), spec.level.saturating_sub(1))?;
    let budget = (value - coarse).abs() + 1e-14 * value.abs();
    let mut est = VolumeEstimate { r, value, coarse, budget, mc_value: None, mc_stderr: None, discrepancy: None };
    if spec.mc_samples > 0 {
        let (mean, stderr) = volume_monte_carlo(map, a, r, spec.mc_samples, spec.seed)?;
        let discrepancy = (value - mean).abs();
        est.mc_value = Some(mean);
        est.mc_stderr = Some(stderr);
        est.discrepancy = Some(discrepancy);
        let allowed = 5.0 * stderr + budget;
        if discrepancy > allowed {
            return Err(DistortionError::Discrepancy { discrepancy, budget: allowed });
        }
    }
    Ok(est)
}

/// Monte Carlo estimate of `V(a, r)` with the same radial substitution:
/// `u` uniform on `[0,1]`, direction uniform on the sphere.
pub fn volume_monte_carlo(
    map: &QcMap,
    a: &Point,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), DistortionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = rng.random();
        let w = loop {
            let x = sample_unit_ball(&mut rng, 3);
            let n = x.norm();
            if n > 1e-6 {
                break x / n;
            }
        };
        let x = a + w * (r * u * u);
        let v = 4.0 * PI * 2.0 * r.powi(3) * u.powi(5) * jacobian_det(map, &x)?;
        sum += v;
        sum2 += v * v;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean).max(0.0) * m / (m - 1.0).max(1.0);
    Ok((mean, (var / m).sqrt()))
}

/// `int_{B(a,R) \ B(a,r)} J` by Gauss-Legendre directly in `rho`.
pub fn shell_volume(map: &QcMap, a: &Point, r: f64, big_r: f64, spec: &VolumeSpec) -> Result<f64, DistortionError> {
    check_radii(r, big_r)?;
    let center = Vec3::new(a[0], a[1], a[2]);
    let (dirs, weights) = angular_rule(spec.level)?;
    let (x, w) = gauss_legendre(spec.radial_nodes);
    let (mid, half) = (0.5 * (r + big_r), 0.5 * (big_r - r));
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let rho = mid + half * xi;
        let mut s = 0.0;
        for (d, q) in dirs.iter().zip(&weights) {
            s += q * jacobian_det(map, &to_point(&(center + d * rho)))?;
        }
        total += half * wi * rho * rho * s;
    }
    Ok(total)
}

/// Where a dilatation constant came from.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Declared,
    Sampled { estimate: f64, inflation: f64, samples: usize, region: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct DilatationUsed {
    pub ko: f64,
    pub k: f64,
    pub ko_source: Provenance,
    pub k_source: Provenance,
}

#[derive(Clone, Debug, Serialize)]
pub struct DilatationPolicy {
    pub samples: usize,
    pub seed: u64,
    pub inflation: f64,
    /// Sampling ball radius as a multiple of the outer radius.
    pub region_factor: f64,
}

impl Default for DilatationPolicy {
    fn default() -> Self {
        Self { samples: 100_000, seed: 1, inflation: 1.05, region_factor: 2.0 }
    }
}

/// Declared `K_O` and `K` when the map knows them; otherwise sampled
/// estimates over `B(a, region_factor R)` times the inflation factor.
pub fn dilatation_used(
    map: &QcMap,
    a: &Point,
    big_r: f64,
    policy: &DilatationPolicy,
) -> Result<DilatationUsed, DistortionError> {
    if let (Some(ko), Some(k)) = (map.declared_ko(), map.declared_k()) {
        return Ok(DilatationUsed { ko, k, ko_source: Provenance::Declared, k_source: Provenance::Declared });
    }
    let ball = Ball { center: a.iter().copied().collect(), radius: policy.region_factor * big_r };
    let est = estimate_dilatations(map, &ball, policy.samples, policy.seed)?;
    let sampled = |e: f64| Provenance::Sampled {
        estimate: e,
        inflation: policy.inflation,
        samples: policy.samples,
        region: est.domain.clone(),
    };
    Ok(DilatationUsed {
        ko: est.ko_est * policy.inflation,
        k: est.k_est * policy.inflation,
        ko_source: sampled(est.ko_est),
        k_source: sampled(est.k_est),
    })
}

/// One asserted inequality `lhs <= rhs`, compared in log space.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// `log_rhs - log_lhs`.
    pub margin: f64,
    pub budget: f64,
    /// `margin + budget >= 0`.
    pub pass: bool,
}

impl Assertion {
    fn new(name: &str, log_lhs: f64, log_rhs: f64, budget: f64) -> Self {
        let margin = log_rhs - log_lhs;
        let budget = budget + BUDGET_FLOOR;
        Self { name: name.into(), log_lhs, log_rhs, margin, budget, pass: margin + budget >= 0.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthCheck {
    pub n: usize,
    pub r: f64,
    pub big_r: f64,
    pub k_used: f64,
    pub beta: f64,
    pub log_dstar: f64,
    pub at_r: MinMax,
    pub at_big_r: MinMax,
    pub v_r: VolumeEstimate,
    pub v_big_r: VolumeEstimate,
    pub assertions: Vec<Assertion>,
}

impl GrowthCheck {
    pub fn pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

/// Evaluate `l, L` at both radii and `V` at both radii, and assert
///
/// * `l(R)/L(r) <= (R/r)^beta`
/// * `L(R)/l(r) <= D_*^2 (R/r)^beta`
/// * `V(R)/V(r) <= D_*^(2n) (R/r)^(n beta)`
/// * `L(rho)/l(rho) <= D_*` for `rho` in `{r, R}`.
pub fn check_growth_exponent(
    map: &QcMap,
    a: &Point,
    r: f64,
    big_r: f64,
    k_used: f64,
    minmax: &MinMaxOptions,
    volume: &VolumeSpec,
) -> Result<GrowthCheck, DistortionError> {
    check_radii(r, big_r)?;
    let n = map.dim();
    let nf = n as f64;
    let b = beta(n, k_used)?;
    let ld = log_dstar(k_used)?;
    let at_r = min_max_radius(map, a, r, minmax)?;
    let at_big_r = min_max_radius(map, a, big_r, minmax)?;
    let v_r = volume_growth(map, a, r, volume)?;
    let v_big_r = volume_growth(map, a, big_r, volume)?;
    let log_ratio = (big_r / r).ln();
    let mm = 2.0 * minmax.movement_tol;
    let vb = v_r.budget / v_r.value + v_big_r.budget / v_big_r.value;
    let assertions = vec![
        Assertion::new("l(R)/L(r) <= (R/r)^beta", at_big_r.l.ln() - at_r.big_l.ln(), b * log_ratio, mm),
        Assertion::new("L(R)/l(r) <= D*^2 (R/r)^beta", at_big_r.big_l.ln() - at_r.l.ln(), 2.0 * ld + b * log_ratio, mm),
        Assertion::new(
            "V(R)/V(r) <= D*^(2n) (R/r)^(n beta)",
            v_big_r.value.ln() - v_r.value.ln(),
            2.0 * nf * ld + nf * b * log_ratio,
            vb,
        ),
        Assertion::new("L(r)/l(r) <= D*", at_r.big_l.ln() - at_r.l.ln(), ld, mm),
        Assertion::new("L(R)/l(R) <= D*", at_big_r.big_l.ln() - at_big_r.l.ln(), ld, mm),
    ];
    Ok(GrowthCheck { n, r, big_r, k_used, beta: b, log_dstar: ld, at_r, at_big_r, v_r, v_big_r, assertions })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub tau: f64,
    pub lambda: Option<f64>,
    /// Same solve one mesh level coarser.
    pub lambda_coarse: Option<f64>,
    pub l: f64,
    pub big_l: f64,
    pub v: f64,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RadialProfile {
    pub rows: Vec<ProfileRow>,
    #[serde(skip)]
    pub solves: Vec<LambdaRow>,
}

impl RadialProfile {
    pub fn taus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOptions {
    pub k: usize,
    pub tau_steps: usize,
    pub mesh_level: u32,
    pub tube_radius: f64,
    pub p: Option<f64>,
    pub conform: bool,
    pub solver: SolverOptions,
    pub minmax: MinMaxOptions,
    pub volume: VolumeSpec,
    pub dilatation: DilatationPolicy,
    /// Replaces the dilatation constants (fault injection).
    pub k_override: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            k: 1,
            tau_steps: 8,
            mesh_level: 5,
            tube_radius: 0.05,
            p: None,
            conform: true,
            solver: SolverOptions::default(),
            minmax: MinMaxOptions::default(),
            volume: VolumeSpec::default(),
            dilatation: DilatationPolicy::default(),
            k_override: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub map: String,
    pub a: Vec<f64>,
    pub r: f64,
    pub big_r: f64,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub ko_used: f64,
    pub k_used: f64,
    pub ko_source: Provenance,
    pub k_source: Provenance,
    pub beta: f64,
    pub lambda_integral: f64,
    pub lambda_integral_budget: f64,
    pub log_lhs: f64,
    pub log_mid: f64,
    pub log_rhs: f64,
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub margin_lhs_mid: f64,
    pub margin_mid_rhs: f64,
    pub budget_lhs_mid: f64,
    pub budget_mid_rhs: f64,
    pub pass_lhs_mid: bool,
    pub pass_mid_rhs: bool,
    pub pass: bool,
    pub flags: Vec<String>,
    pub v_r: VolumeEstimate,
    pub v_big_r: VolumeEstimate,
    pub profile: RadialProfile,
    /// Wall time per pipeline step; kept out of serialized reports.
    #[serde(skip)]
    pub step_seconds: Vec<(&'static str, f64)>,
}

/// Assemble `exp{(1/K_O) int_r^R lambda} <= V(a,R)/V(a,r) <= D_*^(2n) (R/r)^(n beta)`
/// with lambda computed on `Sigma(a, tau)` over a uniform tau grid.
pub fn verify_main_inequality(
    map: &QcMap,
    a: &Point,
    r: f64,
    big_r: f64,
    opts: &VerifyOptions,
) -> Result<VerificationReport, DistortionError> {
    check_radii(r, big_r)?;
    let n = map.dim();
    if n != 3 || a.len() != 3 {
        return Err(DistortionError::UnsupportedDimension(n));
    }
    if opts.tau_steps == 0 {
        return Err(SolverError::BadRadii.into());
    }
    let p = opts.p.unwrap_or(n as f64);
    let mut step_seconds = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, clock: &mut Instant| {
        step_seconds.push((name, clock.elapsed().as_secs_f64()));
        *clock = Instant::now();
    };
    let mut dil = dilatation_used(map, a, big_r, &opts.dilatation)?;
    if let Some(k) = opts.k_override {
        dil = DilatationUsed { ko: k, k, ko_source: Provenance::Declared, k_source: Provenance::Declared };
    }
    let b = beta(n, dil.k)?;
    lap("dilatation", &mut clock);

    let steps = opts.tau_steps;
    let taus: Vec<f64> = (0..=steps).map(|i| r + (big_r - r) * i as f64 / steps as f64).collect();
    let spec =
        ProfileSpec { k: opts.k, mesh_level: opts.mesh_level, tube_radius: opts.tube_radius, p, conform: opts.conform };
    let fine = lambda_radial_profile(map, a, &taus, &spec, &opts.solver)?;
    let coarse_spec = ProfileSpec { mesh_level: opts.mesh_level.saturating_sub(1), ..spec.clone() };
    let coarse = lambda_radial_profile(map, a, &taus, &coarse_spec, &opts.solver)?;
    lap("lambda_profile", &mut clock);

    let mut flags = Vec::new();
    let mut rows = Vec::with_capacity(taus.len());
    let row_volume = VolumeSpec { mc_samples: 0, ..opts.volume.clone() };
    for (i, &tau) in taus.iter().enumerate() {
        let mm = min_max_radius(map, a, tau, &opts.minmax)?;
        let v = volume_rule(map, a, tau, row_volume.radial_nodes, row_volume.level)?;
        let mut row_flags = Vec::new();
        if let Some(f) = &fine[i].flag {
            row_flags.push(f.clone());
            flags.push(format!("tau={tau}: {f}"));
        }
        rows.push(ProfileRow {
            tau,
            lambda: fine[i].lambda,
            lambda_coarse: coarse[i].lambda,
            l: mm.l,
            big_l: mm.big_l,
            v,
            flags: row_flags,
        });
    }

    lap("distortion_rows", &mut clock);

    // rows without a boundary contribute nothing; they are flagged above
    let lam: Vec<f64> = rows.iter().map(|r| r.lambda.unwrap_or(0.0)).collect();
    let lam_coarse: Vec<f64> = rows.iter().map(|r| r.lambda_coarse.unwrap_or(0.0)).collect();
    let integral = trapezoid(&taus, &lam);
    let mesh_err = (integral - trapezoid(&taus, &lam_coarse)).abs();
    let grid_err = if steps.is_multiple_of(2) {
        let half_t: Vec<f64> = taus.iter().step_by(2).copied().collect();
        let half_l: Vec<f64> = lam.iter().step_by(2).copied().collect();
        (integral - trapezoid(&half_t, &half_l)).abs() / 3.0
    } else {
        0.0
    };
    let integral_budget = mesh_err + grid_err;

    let v_r = volume_growth(map, a, r, &opts.volume)?;
    let v_big_r = volume_growth(map, a, big_r, &opts.volume)?;
    lap("volume", &mut clock);
    let log_lhs = integral / dil.ko;
    let log_mid = v_big_r.value.ln() - v_r.value.ln();
    let log_rhs = log_main_bound(n, dil.k, r, big_r)?;
    let v_budget = v_r.budget / v_r.value + v_big_r.budget / v_big_r.value;
    let budget_lhs_mid = integral_budget / dil.ko + v_budget + BUDGET_FLOOR;
    let budget_mid_rhs = v_budget + BUDGET_FLOOR;
    let margin_lhs_mid = log_mid - log_lhs;
    let margin_mid_rhs = log_rhs - log_mid;
    let pass_lhs_mid = margin_lhs_mid + budget_lhs_mid > 0.0;
    let pass_mid_rhs = margin_mid_rhs + budget_mid_rhs > 0.0;
    Ok(VerificationReport {
        map: map.label().to_string(),
        a: a.iter().copied().collect(),
        r,
        big_r,
        n,
        k: opts.k,
        p,
        ko_used: dil.ko,
        k_used: dil.k,
        ko_source: dil.ko_source,
        k_source: dil.k_source,
        beta: b,
        lambda_integral: integral,
        lambda_integral_budget: integral_budget,
        log_lhs,
        log_mid,
        log_rhs,
        lhs: log_lhs.exp(),
        mid: log_mid.exp(),
        rhs: log_rhs.exp(),
        margin_lhs_mid,
        margin_mid_rhs,
        budget_lhs_mid,
        budget_mid_rhs,
        pass_lhs_mid,
        pass_mid_rhs,
        pass: pass_lhs_mid && pass_mid_rhs && flags.is_empty(),
        flags,
        v_r,
        v_big_r,
        profile: RadialProfile { rows, solves: fine },
        step_seconds,
    })
}

/// `Omega_n r^n`, the volume of a Euclidean ball.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    unit_ball_volume(n) * r.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn origin() -> Point {
        Point::zeros(3)
    }

    #[test]
    fn dstar_values() {
        assert_eq!(dstar(1.0).unwrap(), 1.0);
        assert!((dstar(2.0).unwrap() / 24f64.exp() - 1.0).abs() < 1e-12);
        assert!((dstar(1.25).unwrap() - 5.625f64.exp()).abs() < 1e-9);
        assert!(dstar(0.9).is_err());
    }

    #[test]
    fn main_bound_values() {
        assert!((main_bound(3, 1.0, 1.0, 2.0).unwrap() - 8.0).abs() < 1e-12);
        // ln(D_*(4)^6 2^6) = 6 * 80 sqrt 3 + 6 ln 2
        let golden = 480.0 * 3f64.sqrt() + 6.0 * 2f64.ln();
        assert!((log_main_bound(3, 4.0, 1.0, 2.0).unwrap() - golden).abs() < 1e-10);
        assert!(main_bound(3, 4.0, 1.0, 2.0).unwrap().is_infinite());
        assert!((main_bound(3, 1.0, 1.0 - 1e-9, 1.0).unwrap() - 1.0).abs() < 1e-8);
        assert!(main_bound(3, 1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn ring_capacity() {
        let e = 1f64.exp();
        assert!((capacity_round_ring(3, 1.0, e).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!((capacity_round_ring(3, 1.0, e * e).unwrap() - PI).abs() < 1e-12);
        assert!((capacity_round_ring(2, 1.0, e).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!(capacity_round_ring(3, 1.0, 1.0 + 1e-12).unwrap() > 1e20);
        let c = capacity_energy_check(3, 1.0, e, 16).unwrap();
        assert!((c - 4.0 * PI).abs() < 1e-8 * 4.0 * PI);
        let c2 = capacity_energy_check(2, 0.5, 3.0, 16).unwrap();
        assert!((c2 - 2.0 * PI / 6f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn minmax_closed_forms() {
        let opts = MinMaxOptions::default();
        let id = QcMap::identity(3).unwrap();
        let m = min_max_radius(&id, &Point::from_column_slice(&[0.3, -1.0, 2.0]), 1.7, &opts).unwrap();
        assert!((m.l - 1.7).abs() < 1e-14 && (m.big_l - 1.7).abs() < 1e-14);
        let st = QcMap::radial_stretch(3, 2.0).unwrap();
        let m = min_max_radius(&st, &origin(), 1.5, &opts).unwrap();
        assert!((m.l - 2.25).abs() < 1e-12 && (m.big_l - 2.25).abs() < 1e-12);
        let lin = QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap();
        let m = min_max_radius(&lin, &origin(), 1.0, &opts).unwrap();
        assert!((m.l - 1.0).abs() < 1e-12 && (m.big_l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn minmax_of_general_linear_map_matches_singular_values() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.1, 1.5, 0.3, 0.0, -0.5, 0.8]);
        let (smax, smin, _) = crate::maps::singular_extremes(&a);
        let map = QcMap::linear(a).unwrap();
        let m =
            min_max_radius(&map, &Point::from_column_slice(&[1.0, 2.0, 3.0]), 2.0, &MinMaxOptions::default()).unwrap();
        assert!((m.l - 2.0 * smin).abs() < 1e-9, "{} vs {}", m.l, 2.0 * smin);
        assert!((m.big_l - 2.0 * smax).abs() < 1e-9);
    }

    #[test]
    fn volume_closed_forms() {
        let spec = VolumeSpec::default();
        let v = volume_growth(&QcMap::identity(3).unwrap(), &Point::from_column_slice(&[1.0, 0.0, 0.0]), 2.0, &spec)
            .unwrap();
        assert!((v.value - ball_volume(3, 2.0)).abs() < 1e-12 * v.value);
        for alpha in [0.5, 2.0] {
            let st = QcMap::radial_stretch(3, alpha).unwrap();
            let v = volume_growth(&st, &origin(), 1.5, &spec).unwrap();
            let exact = ball_volume(3, 1.5f64.powf(alpha));
            assert!((v.value - exact).abs() < 1e-10 * exact, "alpha {alpha}: {} vs {exact}", v.value);
            assert!(v.discrepancy.unwrap() < 5.0 * v.mc_stderr.unwrap() + v.budget);
        }
        let lin = QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap();
        let v = volume_growth(&lin, &origin(), 1.0, &spec).unwrap();
        assert!((v.value - 2.0 * ball_volume(3, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn shear_bump_volume_agrees_with_monte_carlo() {
        let map = QcMap::default_shear_bump();
        let a = map.base_point(1).unwrap();
        let v = volume_growth(&map, &a, 1.0, &VolumeSpec::default()).unwrap();
        let (mc, se) = volume_monte_carlo(&map, &a, 1.0, 1_000_000, 11).unwrap();
        assert!((v.value - mc).abs() < 5.0 * se + v.budget);
        assert!(v.budget < 1e-3 * v.value);
    }

    #[test]
    fn volume_additivity() {
        let map = QcMap::default_shear_bump();
        let a = map.base_point(1).unwrap();
        let spec = VolumeSpec { mc_samples: 0, ..VolumeSpec::default() };
        let vr = volume_growth(&map, &a, 0.5, &spec).unwrap();
        let vbig = volume_growth(&map, &a, 2.0, &spec).unwrap();
        let shell = shell_volume(&map, &a, 0.5, 2.0, &spec).unwrap();
        assert!(((vbig.value - vr.value) - shell).abs() < 10.0 * (vr.budget + vbig.budget) + 1e-9);
    }

    #[test]
    fn growth_equality_case_for_radial_stretch() {
        let st = QcMap::radial_stretch(3, 2.0).unwrap();
        let k = st.declared_k().unwrap();
        assert_eq!(k, 4.0);
        for big_r in [2.0, 4.0] {
            let g =
                check_growth_exponent(&st, &origin(), 1.0, big_r, k, &MinMaxOptions::default(), &VolumeSpec::default())
                    .unwrap();
            assert_eq!(g.beta, 2.0);
            let ratio = g.at_big_r.l / g.at_r.big_l;
            assert!((ratio / big_r.powi(2) - 1.0).abs() < 1e-12);
            assert!(g.pass());
            assert!(g.assertions[0].margin.abs() < 1e-12);
        }
    }

    #[test]
    fn rhs_nondecreasing_in_k() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..40 {
            let k = 1.0 + 0.1 * i as f64;
            let v = log_main_bound(3, k, 0.5, 3.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn sampled_dilatation_is_inflated() {
        let map = QcMap::default_shear_bump();
        let a = map.base_point(1).unwrap();
        let policy = DilatationPolicy { samples: 20_000, ..DilatationPolicy::default() };
        let d = dilatation_used(&map, &a, 1.0, &policy).unwrap();
        match d.k_source {
            Provenance::Sampled { estimate, inflation, .. } => assert!((d.k - estimate * inflation).abs() < 1e-12),
            Provenance::Declared => panic!("shear bump has no closed-form K"),
        }
        let id = dilatation_used(&QcMap::identity(3).unwrap(), &origin(), 1.0, &policy).unwrap();
        assert_eq!((id.ko, id.k), (1.0, 1.0));
    }
}
