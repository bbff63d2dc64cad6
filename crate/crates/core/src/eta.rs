//! First p-Rayleigh quotient with zero boundary values on a meshed sphere
//! domain:
//!
//! `lambda = min_phi (int |grad_S phi|^p)^(1/p) / (int |phi|^p)^(1/p)`,
//! `phi = 0` on the Dirichlet vertices.
//!
//! With `p = n` this is the constant-free lower bound of the variational
//! constant `eta(Sigma)`. The p = 2 problem is solved as a generalized
//! eigenproblem by inverse power iteration; larger `p` are reached by
//! continuation in steps of `p_step`, each step a normalized descent
//! preconditioned by the linearized p-Laplacian, with backtracking.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GeometryError, SolverError};
use crate::geometry::{
    build_sphere_mesh, gradient_operators, MarkOptions, ScalarField, Sphere, SurfaceMesh, TriangleOperator, Vec3,
};
use crate::maps::{Point, QcMap};
use crate::sparse::{conjugate_gradient, dot, MeshMatrix};

/// Floor on `|grad phi|` inside the `(p-2)` power.
const GRAD_FLOOR: f64 = 1e-14;
/// Hessian regularization relative to the rms gradient.
const HESSIAN_DELTA: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub seed: u64,
    /// Continuation step in p from 2 to the target.
    pub p_step: f64,
    /// Descent iterations per continuation step.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, seed: 1, p_step: 0.25, max_iter: 400 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub p: f64,
    pub mesh_level: u32,
    pub tube_radius: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// False when an iteration cap was hit before the residual met `tol`.
    pub trusted: bool,
    #[serde(skip)]
    pub minimizer: ScalarField,
    pub wall_seconds: f64,
}

/// Precomputed per-mesh data for quotient evaluation.
pub struct QuotientProblem<'m> {
    mesh: &'m SurfaceMesh,
    ops: Vec<TriangleOperator>,
    free: Vec<bool>,
    matrix: MeshMatrix,
}

/// Value of the p-quotient pieces at a field.
#[derive(Clone, Copy, Debug)]
struct Eval {
    energy: f64,
    norm: f64,
}

impl<'m> QuotientProblem<'m> {
    pub fn new(mesh: &'m SurfaceMesh) -> Result<Self, SolverError> {
        if mesh.dirichlet_count() == 0 {
            return Err(SolverError::NoBoundary);
        }
        if mesh.free_count() == 0 {
            return Err(SolverError::NoFreeVertices);
        }
        let comps = mesh.free_components();
        if comps.len() > 1 {
            return Err(SolverError::Disconnected(comps.len()));
        }
        let ops = gradient_operators(mesh)?;
        let free = mesh.dirichlet().iter().map(|&d| !d).collect();
        Ok(Self { mesh, ops, free, matrix: MeshMatrix::pattern(mesh) })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        self.mesh
    }

    fn tri_gradient(&self, t: usize, phi: &[f64]) -> Vec3 {
        let tri = &self.mesh.triangles()[t];
        let g = &self.ops[t].grad_basis;
        g[0] * phi[tri[0]] + g[1] * phi[tri[1]] + g[2] * phi[tri[2]]
    }

    fn tri_mean(&self, t: usize, phi: &[f64]) -> f64 {
        let tri = &self.mesh.triangles()[t];
        (phi[tri[0]] + phi[tri[1]] + phi[tri[2]]) / 3.0
    }

    fn eval(&self, phi: &[f64], p: f64, shift: f64) -> Eval {
        let mut energy = 0.0;
        let mut norm = 0.0;
        for t in 0..self.ops.len() {
            let a = self.ops[t].area;
            energy += a * self.tri_gradient(t, phi).norm().powf(p);
            norm += a * (self.tri_mean(t, phi) - shift).abs().powf(p);
        }
        Eval { energy, norm }
    }

    /// Gradients of energy and of the shifted p-norm with respect to nodal values.
    fn gradients(&self, phi: &[f64], p: f64, shift: f64) -> (Vec<f64>, Vec<f64>) {
        let nv = phi.len();
        let mut ge = vec![0.0; nv];
        let mut gn = vec![0.0; nv];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let a = self.ops[t].area;
            let g = self.tri_gradient(t, phi);
            let gn_t = g.norm().max(GRAD_FLOOR);
            let coef = a * p * gn_t.powf(p - 2.0);
            let m = self.tri_mean(t, phi) - shift;
            let mcoef = a * p * m.abs().powf(p - 1.0) * m.signum() / 3.0;
            for (i, &v) in tri.iter().enumerate() {
                ge[v] += coef * g.dot(&self.ops[t].grad_basis[i]);
                gn[v] += mcoef;
            }
        }
        for v in 0..nv {
            if !self.free[v] {
                ge[v] = 0.0;
                gn[v] = 0.0;
            }
        }
        (ge, gn)
    }

    /// Weighted stiffness `sum_T area w_T grad b_a . grad b_b`.
    fn assemble_stiffness(&mut self, weights: &[f64]) {
        self.matrix.clear();
        for t in 0..self.ops.len() {
            let op = self.ops[t];
            let w = op.area * weights[t];
            let mut e = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    e[a][b] = w * op.grad_basis[a].dot(&op.grad_basis[b]);
                }
            }
            self.matrix.add_element(t, &e);
        }
    }

    /// One-point barycentric mass matrix.
    fn mass_matrix(&self) -> MeshMatrix {
        let mut m = MeshMatrix::pattern(self.mesh);
        for t in 0..self.ops.len() {
            let w = self.ops[t].area / 9.0;
            m.add_element(t, &[[w; 3]; 3]);
        }
        m
    }

    /// Hessian of `sum_T area (|g|^2 + delta^2)^(p/2) / p`: the linearized
    /// p-Laplacian, regularized where the gradient vanishes.
    fn assemble_hessian(&mut self, phi: &[f64], p: f64) {
        if p == 2.0 {
            self.assemble_stiffness(&vec![1.0; self.ops.len()]);
            return;
        }
        let grads: Vec<Vec3> = (0..self.ops.len()).map(|t| self.tri_gradient(t, phi)).collect();
        let area: f64 = self.ops.iter().map(|o| o.area).sum();
        let rms = (grads.iter().zip(&self.ops).map(|(g, o)| o.area * g.norm_squared()).sum::<f64>() / area).sqrt();
        let delta2 = (HESSIAN_DELTA * rms).powi(2).max(GRAD_FLOOR * GRAD_FLOOR);
        self.matrix.clear();
        for t in 0..self.ops.len() {
            let op = self.ops[t];
            let g = grads[t];
            let s2 = g.norm_squared() + delta2;
            let w = op.area * s2.powf(0.5 * (p - 2.0));
            let c = (p - 2.0) / s2;
            let gb: [f64; 3] = std::array::from_fn(|a| g.dot(&op.grad_basis[a]));
            let mut e = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    e[a][b] = w * (op.grad_basis[a].dot(&op.grad_basis[b]) + c * gb[a] * gb[b]);
                }
            }
            self.matrix.add_element(t, &e);
        }
    }

    fn normalize(&self, phi: &mut [f64], p: f64) {
        let n = self.eval(phi, p, 0.0).norm;
        let s = n.powf(-1.0 / p);
        phi.iter_mut().for_each(|v| *v *= s);
    }

    /// Linear problem (p = 2): inverse power iteration on `K x = mu M x` until
    /// `mu` settles to `tol`; the eigenvector is then polished by `descend`.
    fn inverse_iteration(&mut self, seed: u64, tol: f64, max_iter: usize) -> (Vec<f64>, usize, bool) {
        let nv = self.free.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..nv).map(|v| if self.free[v] { rng.random_range(0.5..1.5) } else { 0.0 }).collect();
        self.assemble_stiffness(&vec![1.0; self.ops.len()]);
        let mass = self.mass_matrix();
        let mut mx = vec![0.0; nv];
        let mut y = x.clone();
        let mut mu_prev = f64::INFINITY;
        for it in 1..=max_iter {
            mass.mul_masked(&x, &self.free, &mut mx);
            conjugate_gradient(&self.matrix, &self.free, &mx, &mut y, 1e-12, 20 * nv + 100);
            let kyy = self.matrix.quadratic_form(&y, &self.free);
            let myy = mass.quadratic_form(&y, &self.free);
            let mu = kyy / myy;
            let s = 1.0 / myy.sqrt();
            for v in 0..nv {
                x[v] = y[v] * s;
            }
            y.copy_from_slice(&x);
            y.iter_mut().for_each(|v| *v /= mu);
            if (mu_prev - mu).abs() <= tol * mu {
                return (x, it, true);
            }
            mu_prev = mu;
        }
        (x, max_iter, false)
    }

    /// Normalized preconditioned descent on `F = E / N` at exponent `p`,
    /// starting from `phi`. Returns `(iterations, residual, converged)`.
    fn descend(&mut self, phi: &mut [f64], p: f64, tol: f64, max_iter: usize) -> (usize, f64, bool) {
        let nv = phi.len();
        self.normalize(phi, p);
        let mut step: f64 = 1.0;
        let mut residual = f64::INFINITY;
        let mut d = vec![0.0; nv];
        let flat = 64.0 * f64::EPSILON * (self.ops.len() as f64).sqrt();
        let mut best = f64::INFINITY;
        let mut stalls = 0;
        for it in 0..max_iter {
            let ev = self.eval(phi, p, 0.0);
            let f = ev.energy / ev.norm;
            let (ge, gn) = self.gradients(phi, p, 0.0);
            // r = (grad E - F grad N) / (p N); grad F = p r
            let r: Vec<f64> = ge.iter().zip(&gn).map(|(e, n)| (e - f * n) / (p * ev.norm)).collect();
            self.assemble_hessian(phi, p);
            let rtol = (0.01 * residual).clamp(1e-12, 1e-4);
            d.iter_mut().for_each(|v| *v = 0.0);
            conjugate_gradient(&self.matrix, &self.free, &r, &mut d, rtol, 20 * nv + 100);
            let r_pinv_r = dot(&r, &d);
            let phi_p_phi = self.matrix.quadratic_form(phi, &self.free);
            residual = (r_pinv_r.max(0.0) / phi_p_phi).sqrt();
            if residual < tol {
                return (it, residual, true);
            }
            // direction -P^{-1} r
            let slope = -p * r_pinv_r;
            let mut trial = vec![0.0; nv];
            if -slope < flat * f {
                // decrease is below the rounding of F: take the full step and
                // judge progress by the residual alone
                if residual < 0.9 * best {
                    best = residual;
                    stalls = 0;
                } else {
                    stalls += 1;
                    if stalls >= 5 {
                        return (it, best, best < tol);
                    }
                }
                for v in 0..nv {
                    trial[v] = phi[v] - d[v];
                }
                step = 1.0;
                phi.copy_from_slice(&trial);
                self.normalize(phi, p);
                continue;
            }
            best = best.min(residual);
            // Armijo backtracking on F
            let mut t = (2.0 * step).min(1.0);
            let mut accepted = false;
            for _ in 0..60 {
                for v in 0..nv {
                    trial[v] = phi[v] - t * d[v];
                }
                let e = self.eval(&trial, p, 0.0);
                if e.norm > 0.0 && e.energy / e.norm <= f + 1e-4 * t * slope {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return (it, residual, residual < tol);
            }
            step = t;
            phi.copy_from_slice(&trial);
            self.normalize(phi, p);
        }
        (max_iter, residual, false)
    }

    /// The quotient `(E/N)^(1/p)` of a field.
    pub fn quotient(&self, phi: &[f64], p: f64) -> f64 {
        let e = self.eval(phi, p, 0.0);
        (e.energy / e.norm).powf(1.0 / p)
    }

    /// Minimize the p-quotient from a given start (no continuation).
    pub fn minimize_from(
        &mut self,
        start: &ScalarField,
        p: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<LambdaEstimate, SolverError> {
        check_p_tol(p, tol)?;
        let timer = Instant::now();
        let mut phi: Vec<f64> = start.values.iter().zip(&self.free).map(|(&v, &f)| if f { v } else { 0.0 }).collect();
        let (iterations, residual, trusted) = self.descend(&mut phi, p, tol, max_iter);
        Ok(LambdaEstimate {
            lambda: self.quotient(&phi, p),
            p,
            mesh_level: self.mesh.level(),
            tube_radius: None,
            iterations,
            residual,
            trusted,
            minimizer: ScalarField::new(phi),
            wall_seconds: timer.elapsed().as_secs_f64(),
        })
    }
}

fn check_p_tol(p: f64, tol: f64) -> Result<(), SolverError> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(SolverError::BadExponent(p));
    }
    if !(tol > 0.0) {
        return Err(SolverError::BadTolerance);
    }
    Ok(())
}

/// Continuation schedule `2, 2 + step, ..., p`.
pub fn p_schedule(p: f64, step: f64) -> Vec<f64> {
    let mut s = vec![2.0];
    let mut q = 2.0;
    while q + step < p - 1e-12 {
        q += step;
        s.push(q);
    }
    if p > 2.0 {
        s.push(p);
    }
    s
}

/// First p-Rayleigh quotient of the free region of `mesh`.
pub fn estimate_lambda(mesh: &SurfaceMesh, p: f64, opts: &SolverOptions) -> Result<LambdaEstimate, SolverError> {
    check_p_tol(p, opts.tol)?;
    let timer = Instant::now();
    let mut problem = QuotientProblem::new(mesh)?;
    let (mut phi, mut iterations, mut trusted) = problem.inverse_iteration(opts.seed, opts.tol, 500);
    let schedule = p_schedule(p, opts.p_step);
    let mut residual = 0.0;
    for (i, &q) in schedule.iter().enumerate() {
        let last = i + 1 == schedule.len();
        let tol = if last { opts.tol } else { opts.tol.max(1e-4) };
        let (it, res, ok) = problem.descend(&mut phi, q, tol, opts.max_iter);
        iterations += it;
        residual = res;
        if last {
            trusted &= ok;
        }
    }
    let mut lambda = problem.quotient(&phi, p);
    // ground states are sign-definite: re-minimize from |phi| if needed
    let peak = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if phi.iter().any(|&v| v < -1e-9 * peak) {
        let mut abs_phi: Vec<f64> = phi.iter().map(|v| v.abs()).collect();
        let (it, res, ok) = problem.descend(&mut abs_phi, p, opts.tol, opts.max_iter);
        iterations += it;
        let alt = problem.quotient(&abs_phi, p);
        if alt < lambda * (1.0 - opts.tol) {
            // the first run did not reach the ground state
            trusted = false;
        }
        if alt <= lambda {
            lambda = alt;
            phi = abs_phi;
            residual = res;
            trusted &= ok;
        }
    } else if phi.iter().all(|&v| v <= 0.0) {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(LambdaEstimate {
        lambda,
        p,
        mesh_level: mesh.level(),
        tube_radius: None,
        iterations,
        residual,
        trusted,
        minimizer: ScalarField::new(phi),
        wall_seconds: timer.elapsed().as_secs_f64(),
    })
}

/// The quotient of a given field computed through the geometry module's
/// gradient and integration routines.
pub fn rayleigh_quotient(mesh: &SurfaceMesh, field: &ScalarField, p: f64) -> Result<f64, GeometryError> {
    use crate::geometry::{barycentric_values, integrate_p_norm, surface_gradient};
    let grads: Vec<f64> = surface_gradient(mesh, field)?.iter().map(|g| g.norm()).collect();
    let num = integrate_p_norm(mesh, &grads, p)?;
    let den = integrate_p_norm(mesh, &barycentric_values(mesh, field), p)?;
    Ok((num / den).powf(1.0 / p))
}

/// One row of the sup-over-A scan.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftedQuotient {
    pub shift: f64,
    pub quotient: f64,
}

/// `(int |grad phi|^p)^(1/p) / (int |phi - A|^p)^(1/p)` for a given field.
pub fn shifted_quotient(mesh: &SurfaceMesh, field: &ScalarField, p: f64, shift: f64) -> Result<f64, SolverError> {
    let problem = QuotientProblem::new(mesh)?;
    let e = problem.eval(&field.values, p, shift);
    Ok((e.energy / e.norm).powf(1.0 / p))
}

/// For each shift `A`, minimize the shifted quotient over admissible fields
/// with `int |phi|^p >= floor`. Starts from both signs of the ground state
/// and keeps the smaller value. Experimental: the result is reported next
/// to lambda and never replaces it.
pub fn sup_over_a_scan(
    mesh: &SurfaceMesh,
    p: f64,
    shifts: &[f64],
    floor: f64,
    opts: &SolverOptions,
) -> Result<Vec<ShiftedQuotient>, SolverError> {
    if !(floor > 0.0) {
        return Err(SolverError::BadFloor);
    }
    let ground = estimate_lambda(mesh, p, opts)?;
    let mut problem = QuotientProblem::new(mesh)?;
    let mut rows = Vec::with_capacity(shifts.len());
    for &a in shifts {
        let mut best = f64::INFINITY;
        for sign in [1.0, -1.0] {
            let mut phi: Vec<f64> = ground.minimizer.values.iter().map(|v| sign * v).collect();
            let q = problem.descend_shifted(&mut phi, p, a, floor, opts.tol, opts.max_iter);
            best = best.min(q);
        }
        rows.push(ShiftedQuotient { shift: a, quotient: best });
    }
    Ok(rows)
}

impl QuotientProblem<'_> {
    fn rescale_to_floor(&self, phi: &mut [f64], p: f64, floor: f64) {
        let n = self.eval(phi, p, 0.0).norm;
        if n < floor {
            let s = if n > 0.0 { (floor / n).powf(1.0 / p) } else { 1.0 };
            phi.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Projected descent on `G = E / D_A` over `{N(phi) >= floor}`.
    fn descend_shifted(&mut self, phi: &mut [f64], p: f64, shift: f64, floor: f64, tol: f64, max_iter: usize) -> f64 {
        let nv = phi.len();
        self.rescale_to_floor(phi, p, floor);
        // a fixed stiffness metric keeps this simple; the scan is diagnostic only
        self.assemble_stiffness(&vec![1.0; self.ops.len()]);
        let g_of = |me: &Self, x: &[f64]| {
            let e = me.eval(x, p, shift);
            e.energy / e.norm
        };
        let mut g = g_of(self, phi);
        let mut d = vec![0.0; nv];
        let mut step: f64 = 1.0;
        for _ in 0..max_iter {
            let ev = self.eval(phi, p, shift);
            let (ge, gd) = self.gradients(phi, p, shift);
            let grad: Vec<f64> = ge.iter().zip(&gd).map(|(e, n)| (e - g * n) / ev.norm).collect();
            d.iter_mut().for_each(|v| *v = 0.0);
            conjugate_gradient(&self.matrix, &self.free, &grad, &mut d, 1e-8, 20 * nv + 100);
            let slope = -dot(&grad, &d);
            if -slope <= tol * tol * g.max(1e-300) {
                break;
            }
            let mut t = (2.0 * step).min(1e6);
            let mut trial = vec![0.0; nv];
            let mut improved = false;
            for _ in 0..80 {
                for v in 0..nv {
                    trial[v] = phi[v] - t * d[v];
                }
                self.rescale_to_floor(&mut trial, p, floor);
                let gt = g_of(self, &trial);
                if gt <= g + 1e-4 * t * slope {
                    g = gt;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
            step = t;
            phi.copy_from_slice(&trial);
        }
        g.powf(1.0 / p)
    }
}

/// One row of the lambda-column of a radial profile.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaRow {
    pub tau: f64,
    pub lambda: Option<f64>,
    pub trusted: bool,
    pub flag: Option<String>,
    pub estimate: Option<LambdaEstimate>,
    pub dirichlet_vertices: usize,
}

/// Parameters shared by every row of a profile.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileSpec {
    pub k: usize,
    pub mesh_level: u32,
    pub tube_radius: f64,
    pub p: f64,
    pub conform: bool,
}

/// Mark the quasiplane trace on `S(a, tau)` for the given map.
pub fn trace_mesh(map: &QcMap, a: &Point, tau: f64, spec: &ProfileSpec) -> Result<SurfaceMesh, SolverError> {
    let center = Vec3::new(a[0], a[1], a[2]);
    let mesh = build_sphere_mesh(&Sphere::new(center, tau)?, spec.mesh_level)?;
    let opts = MarkOptions { conform: spec.conform, keep_point: None };
    Ok(mesh.mark_quasiplane_trace(map, spec.k, spec.tube_radius, &opts)?)
}

/// Tabulate lambda(Sigma(a, tau)) over the radii. Rows are independent and
/// solved in parallel; each solve is sequential, so results do not depend on
/// the worker count.
pub fn lambda_radial_profile(
    map: &QcMap,
    a: &Point,
    radii: &[f64],
    spec: &ProfileSpec,
    opts: &SolverOptions,
) -> Result<Vec<LambdaRow>, SolverError> {
    if map.dim() != 3 || a.len() != 3 {
        return Err(GeometryError::DimensionMismatch(map.dim()).into());
    }
    let off = map.perp_norm(a, spec.k);
    if off > 1e-9 {
        return Err(SolverError::CenterOffPlane(off));
    }
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::BadRadii);
    }
    radii
        .par_iter()
        .map(|&tau| {
            let mesh = match trace_mesh(map, a, tau, spec) {
                Ok(m) => m,
                Err(SolverError::Geometry(GeometryError::EmptyTrace)) => {
                    return Ok(LambdaRow {
                        tau,
                        lambda: None,
                        trusted: false,
                        flag: Some("no boundary, lambda undefined".into()),
                        estimate: None,
                        dirichlet_vertices: 0,
                    })
                }
                Err(e) => return Err(e),
            };
            let mut est = estimate_lambda(&mesh, spec.p, opts)?;
            est.tube_radius = Some(spec.tube_radius);
            Ok(LambdaRow {
                tau,
                lambda: Some(est.lambda),
                trusted: est.trusted,
                flag: (!est.trusted).then(|| "untrusted solve".to_string()),
                dirichlet_vertices: mesh.dirichlet_count(),
                estimate: Some(est),
            })
        })
        .collect()
}
