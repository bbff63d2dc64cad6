//! Spheres, icosphere meshes, Dirichlet marking of the quasiplane trace,
//! P1 surface gradients and p-norm integration.
//!
//! Geometric experiments run in R^3: a sphere S(a, r) is a 2-surface and the
//! trace of a 1-dimensional quasiplane on it is a finite set of points.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::maps::QcMap;

pub type Vec3 = Vector3<f64>;

/// Maximum icosphere subdivision depth.
pub const MAX_LEVEL: u32 = 8;

/// Relative tolerance for "vertex lies on the sphere".
pub const ON_SPHERE_TOL: f64 = 1e-12;

/// Angle subtended by one icosahedron edge.
pub const ICOSAHEDRON_EDGE_ANGLE: f64 = 1.1071487177940904;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn unit() -> Self {
        Self { center: Vec3::zeros(), radius: 1.0 }
    }

    /// Radial projection of `x` onto the sphere.
    pub fn project(&self, x: &Vec3) -> Vec3 {
        let d = x - self.center;
        self.center + d * (self.radius / d.norm())
    }
}

/// Approximate geodesic mesh spacing (radians) at a subdivision level.
pub fn angular_resolution(level: u32) -> f64 {
    ICOSAHEDRON_EDGE_ANGLE / f64::from(1u32 << level.min(30))
}

/// Triangulated subdomain of a sphere with Dirichlet-marked vertices.
///
/// Vertices marked in `dirichlet` carry the boundary condition phi = 0; the
/// remaining (free) vertices form one edge-connected component.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    sphere: Sphere,
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    dirichlet: Vec<bool>,
    level: u32,
}

/// Per-vertex nodal values of a P1 field.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(mesh: &SurfaceMesh, f: impl Fn(&Vec3) -> f64) -> Self {
        Self { values: mesh.vertices.iter().map(f).collect() }
    }

    /// True when every Dirichlet vertex carries exactly 0.
    pub fn is_admissible(&self, mesh: &SurfaceMesh) -> bool {
        self.values.len() == mesh.vertices.len()
            && mesh.dirichlet.iter().zip(&self.values).all(|(&d, &v)| !d || v == 0.0)
    }
}

/// Options for Dirichlet marking.
#[derive(Clone, Debug)]
pub struct MarkOptions {
    /// Move vertices next to the region boundary onto it so that the discrete
    /// boundary is inscribed in the continuous one.
    pub conform: bool,
    /// Keep the free component containing the vertex nearest to this point.
    pub keep_point: Option<Vec3>,
}

impl Default for MarkOptions {
    fn default() -> Self {
        Self { conform: true, keep_point: None }
    }
}

impl SurfaceMesh {
    /// Assemble a mesh from raw parts, validating the sphere constraint.
    pub fn from_parts(
        sphere: Sphere,
        level: u32,
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        dirichlet: Vec<bool>,
    ) -> Result<Self, GeometryError> {
        if dirichlet.len() != vertices.len() {
            return Err(GeometryError::InvalidMesh(format!(
                "{} flags for {} vertices",
                dirichlet.len(),
                vertices.len()
            )));
        }
        for (i, v) in vertices.iter().enumerate() {
            let dev = ((v - sphere.center).norm() - sphere.radius).abs();
            if dev > 1e-9 * sphere.radius {
                return Err(GeometryError::InvalidMesh(format!("vertex {i} off the sphere by {dev:e}")));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(GeometryError::InvalidMesh(format!("triangle {t} has an out-of-range index")));
            }
        }
        Ok(Self { sphere, vertices, triangles, dirichlet, level })
    }

    pub fn sphere(&self) -> &Sphere {
        &self.sphere
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn dirichlet_count(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| d).count()
    }

    pub fn free_count(&self) -> usize {
        self.n_vertices() - self.dirichlet_count()
    }

    /// Copy of the mesh with a new Dirichlet mask.
    pub fn with_dirichlet(&self, mask: Vec<bool>) -> Result<Self, GeometryError> {
        if mask.len() != self.vertices.len() {
            return Err(GeometryError::FieldLength { expected: self.vertices.len(), got: mask.len() });
        }
        Ok(Self { dirichlet: mask, ..self.clone() })
    }

    /// Same combinatorics, every vertex mapped by `x -> c + s (x - c)`.
    pub fn dilated(&self, factor: f64) -> Result<Self, GeometryError> {
        let sphere = Sphere::new(self.sphere.center, self.sphere.radius * factor)?;
        let c = self.sphere.center;
        let vertices = self.vertices.iter().map(|v| c + (v - c) * factor).collect();
        Ok(Self { sphere, vertices, ..self.clone() })
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a])).norm()
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.triangle_areas().iter().sum()
    }

    pub fn barycenter(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Unique undirected edges, each as `(lo, hi)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Sorted vertex adjacency lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (i, j) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Triangles whose normal points into the sphere.
    pub fn inverted_triangles(&self) -> Vec<usize> {
        (0..self.triangles.len()).filter(|&t| !self.triangle_outward(t)).collect()
    }

    fn triangle_outward(&self, t: usize) -> bool {
        let [a, b, c] = self.triangles[t];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        n.dot(&(self.barycenter(t) - self.sphere.center)) > 0.0
    }

    /// Connected components of the free vertex set (by mesh edges).
    pub fn free_components(&self) -> Vec<Vec<usize>> {
        components(&self.neighbors(), &self.dirichlet)
    }

    /// Mark the trace of the quasiplane `f^{-1}(Pi^k_0)` on this sphere.
    ///
    /// Vertices whose normalized distance to the quasiplane is at most
    /// `tube_radius` (in units of the sphere radius) are pinned. The distance is
    /// `|B^+ f_perp(x)|`, the minimum-norm Gauss-Newton correction onto the zero
    /// set of the last n-k map coordinates. A vertex that is a local minimum of
    /// that distance and lies within one edge length of the quasiplane is always
    /// pinned, so every trace point pins at least one vertex.
    pub fn mark_quasiplane_trace(
        &self,
        map: &QcMap,
        k: usize,
        tube_radius: f64,
        opts: &MarkOptions,
    ) -> Result<SurfaceMesh, GeometryError> {
        let n = map.dim();
        if n != 3 {
            return Err(GeometryError::DimensionMismatch(n));
        }
        if k < 1 || k + 2 > n {
            return Err(GeometryError::BadPlaneDimension { n, k });
        }
        if !(tube_radius > 0.0) {
            return Err(GeometryError::NonPositiveTube(tube_radius));
        }
        let r = self.sphere.radius;
        let dist = |x: &Vec3| trace_distance(map, k, x) / r;
        let d: Vec<f64> = self.vertices.iter().map(dist).collect();
        let adj = self.neighbors();
        let mut pins = Vec::new();
        for v in 0..self.vertices.len() {
            let h = adj[v].iter().map(|&w| (self.vertices[w] - self.vertices[v]).norm()).fold(0.0, f64::max) / r;
            if d[v] <= h && adj[v].iter().all(|&w| d[v] <= d[w]) {
                pins.push(v);
            }
        }
        self.mark_region(&|x| dist(x) - tube_radius, &pins, opts)
    }

    /// Restrict to the spherical cap of angular radius `theta` around the
    /// direction `pole`: every vertex at angle >= theta is pinned.
    pub fn mark_cap(&self, pole: &Vec3, theta: f64, opts: &MarkOptions) -> Result<SurfaceMesh, GeometryError> {
        let c = self.sphere.center;
        let axis = pole.normalize();
        let phi = move |x: &Vec3| theta - (x - c).normalize().dot(&axis).clamp(-1.0, 1.0).acos();
        let mut opts = opts.clone();
        if opts.keep_point.is_none() {
            opts.keep_point = Some(c + axis * self.sphere.radius);
        }
        self.mark_region(&phi, &[], &opts)
    }

    /// Pin the region `{phi <= 0}` plus the vertices in `locked`.
    pub fn mark_region(
        &self,
        phi: &dyn Fn(&Vec3) -> f64,
        locked: &[usize],
        opts: &MarkOptions,
    ) -> Result<SurfaceMesh, GeometryError> {
        let nv = self.vertices.len();
        let values: Vec<f64> = self.vertices.iter().map(phi).collect();
        let mut inside: Vec<bool> = values.iter().map(|&v| v <= 0.0).collect();
        let mut is_locked = vec![false; nv];
        for &v in locked {
            inside[v] = true;
            is_locked[v] = true;
        }
        let adj = self.neighbors();
        let mut vertices = self.vertices.clone();
        if opts.conform {
            let raw = inside.clone();
            self.conform(phi, &values, &raw, &is_locked, &adj, &mut vertices, &mut inside);
        }
        if !inside.iter().any(|&b| b) {
            return Err(GeometryError::EmptyTrace);
        }
        if inside.iter().all(|&b| b) {
            return Err(GeometryError::MaskCoversAll);
        }
        let comps = components(&adj, &inside);
        if comps.len() > 1 {
            let keep = match opts.keep_point {
                Some(p) => {
                    let target = (0..nv)
                        .filter(|&v| !inside[v])
                        .min_by(|&a, &b| (vertices[a] - p).norm().total_cmp(&(vertices[b] - p).norm()))
                        .ok_or(GeometryError::EmptyFreeRegion)?;
                    comps.iter().position(|c| c.contains(&target)).unwrap()
                }
                None => {
                    let far = farthest_from_mask(&adj, &inside);
                    comps.iter().position(|c| c.contains(&far)).unwrap()
                }
            };
            for (i, comp) in comps.iter().enumerate() {
                if i != keep {
                    for &v in comp {
                        inside[v] = true;
                    }
                }
            }
        }
        if inside.iter().all(|&b| b) {
            return Err(GeometryError::EmptyFreeRegion);
        }
        Ok(SurfaceMesh {
            sphere: self.sphere,
            vertices,
            triangles: self.triangles.clone(),
            dirichlet: inside,
            level: self.level,
        })
    }

    /// For every edge crossing `phi = 0`, move the endpoint nearer to the
    /// crossing (at most half an edge) onto the crossing point and pin it.
    #[allow(clippy::too_many_arguments)]
    fn conform(
        &self,
        phi: &dyn Fn(&Vec3) -> f64,
        values: &[f64],
        raw_inside: &[bool],
        locked: &[bool],
        adj: &[Vec<usize>],
        vertices: &mut [Vec3],
        inside: &mut [bool],
    ) {
        let nv = self.vertices.len();
        // isolated pinned vertices are unresolved point constraints; leave them alone
        let movable: Vec<bool> = (0..nv)
            .map(|v| !locked[v] && (!raw_inside[v] || adj[v].iter().any(|&w| raw_inside[w] && values[w] <= 0.0)))
            .collect();
        let mut best: Vec<Option<(f64, Vec3)>> = vec![None; nv];
        for (u, v) in self.edges() {
            if (values[u] <= 0.0) == (values[v] <= 0.0) {
                continue;
            }
            let s = self.arc_crossing(phi, u, v);
            let (mover, frac) = if s <= 0.5 { (u, s) } else { (v, 1.0 - s) };
            if !movable[mover] {
                continue;
            }
            if best[mover].is_none_or(|(f, _)| frac < f) {
                best[mover] = Some((frac, self.slerp(u, v, s)));
            }
        }
        let mut moved: Vec<usize> = Vec::new();
        for (v, cand) in best.iter().enumerate() {
            if let Some((_, pos)) = cand {
                vertices[v] = *pos;
                inside[v] = true;
                moved.push(v);
            }
        }
        // revert moves that flatten or flip triangles
        let areas0 = self.triangle_areas();
        loop {
            let mut reverted = false;
            for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
                let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
                let bary = (vertices[a] + vertices[b] + vertices[c]) / 3.0;
                let ok = n.dot(&(bary - self.sphere.center)) > 0.0 && 0.5 * n.norm() >= 0.05 * areas0[t];
                if ok {
                    continue;
                }
                let worst = [a, b, c].into_iter().filter(|&i| vertices[i] != self.vertices[i]).max_by(|&i, &j| {
                    (vertices[i] - self.vertices[i]).norm().total_cmp(&(vertices[j] - self.vertices[j]).norm())
                });
                if let Some(i) = worst {
                    vertices[i] = self.vertices[i];
                    inside[i] = raw_inside[i];
                    reverted = true;
                }
            }
            if !reverted {
                break;
            }
        }
    }

    fn slerp(&self, u: usize, v: usize, s: f64) -> Vec3 {
        let c = self.sphere.center;
        let a = (self.vertices[u] - c).normalize();
        let b = (self.vertices[v] - c).normalize();
        let omega = a.dot(&b).clamp(-1.0, 1.0).acos();
        let dir = if omega < 1e-15 { a } else { (a * ((1.0 - s) * omega).sin() + b * (s * omega).sin()) / omega.sin() };
        c + dir.normalize() * self.sphere.radius
    }

    /// Arc parameter in (0, 1) where `phi` changes sign, by bisection.
    fn arc_crossing(&self, phi: &dyn Fn(&Vec3) -> f64, u: usize, v: usize) -> f64 {
        let inside_u = phi(&self.vertices[u]) <= 0.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (phi(&self.slerp(u, v, mid)) <= 0.0) == inside_u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Normalized distance from `x` to the zero set of the last n-k coordinates
/// of `map`: `|B^+ f_perp(x)|` with `B` the corresponding rows of `f'(x)`.
pub fn trace_distance(map: &QcMap, k: usize, x: &Vec3) -> f64 {
    let p = DVector::from_column_slice(x.as_slice());
    let fx = map.eval(&p);
    let n = fx.len();
    let f_perp = fx.rows(k, n - k).into_owned();
    match map.jacobian(&p) {
        Some(jac) => {
            let b = jac.rows(k, n - k).into_owned();
            let gram = &b * b.transpose();
            match gram.cholesky() {
                Some(ch) => f_perp.dot(&ch.solve(&f_perp)).max(0.0).sqrt(),
                None => f_perp.norm(),
            }
        }
        None => f_perp.norm(),
    }
}

fn components(adj: &[Vec<usize>], mask: &[bool]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; adj.len()];
    let mut comps = Vec::new();
    for start in 0..adj.len() {
        if mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !mask[w] && label[w] == usize::MAX {
                    label[w] = id;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Free vertex with the largest hop distance to the masked set (lowest index on ties).
fn farthest_from_mask(adj: &[Vec<usize>], mask: &[bool]) -> usize {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for (v, &m) in mask.iter().enumerate() {
        if m {
            dist[v] = 0;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (v, &d) in dist.iter().enumerate() {
        if !mask[v] && d != usize::MAX && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((v, d));
        }
    }
    best.map_or(0, |(v, _)| v)
}

/// Icosahedron with two antipodal vertices on the x1-axis, so that the trace
/// of the coordinate line on a centred sphere falls on mesh vertices.
fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let z = 1.0 / 5f64.sqrt();
    let rho = 2.0 * z;
    let mut v = vec![Vec3::new(1.0, 0.0, 0.0)];
    for i in 0..5 {
        let t = 2.0 * std::f64::consts::PI * f64::from(i) / 5.0;
        v.push(Vec3::new(z, rho * t.cos(), rho * t.sin()));
    }
    for i in 0..5 {
        let t = 2.0 * std::f64::consts::PI * (f64::from(i) + 0.5) / 5.0;
        v.push(Vec3::new(-z, rho * t.cos(), rho * t.sin()));
    }
    v.push(Vec3::new(-1.0, 0.0, 0.0));
    let a = |i: usize| 1 + i % 5;
    let b = |i: usize| 6 + i % 5;
    let mut f = Vec::with_capacity(20);
    for i in 0..5 {
        f.push([0, a(i), a(i + 1)]);
        f.push([a(i), b(i), a(i + 1)]);
        f.push([a(i + 1), b(i), b(i + 1)]);
        f.push([11, b(i + 1), b(i)]);
    }
    for tri in &mut f {
        let [p, q, r] = *tri;
        let n = (v[q] - v[p]).cross(&(v[r] - v[p]));
        if n.dot(&(v[p] + v[q] + v[r])) < 0.0 {
            tri.swap(1, 2);
        }
    }
    (v, f)
}

/// Icosphere: the icosahedron subdivided `level` times with every vertex
/// projected onto the sphere. Has `10 * 4^level + 2` vertices and no
/// Dirichlet marks.
pub fn build_sphere_mesh(sphere: &Sphere, level: u32) -> Result<SurfaceMesh, GeometryError> {
    if level > MAX_LEVEL {
        return Err(GeometryError::LevelOutOfRange(level));
    }
    let (mut unit, mut faces) = icosahedron();
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[p, q, r] in &faces {
            let mut midpoint = |i: usize, j: usize| {
                let key = if i < j { (i, j) } else { (j, i) };
                *mid.entry(key).or_insert_with(|| {
                    unit.push((unit[i] + unit[j]).normalize());
                    unit.len() - 1
                })
            };
            let pq = midpoint(p, q);
            let qr = midpoint(q, r);
            let rp = midpoint(r, p);
            next.extend_from_slice(&[[p, pq, rp], [pq, q, qr], [rp, qr, r], [pq, qr, rp]]);
        }
        faces = next;
    }
    let vertices = unit.iter().map(|u| sphere.center + u * sphere.radius).collect::<Vec<_>>();
    let n = vertices.len();
    Ok(SurfaceMesh { sphere: *sphere, vertices, triangles: faces, dirichlet: vec![false; n], level })
}

/// Constant gradient of the P1 interpolant on every triangle, lying in the
/// triangle plane.
pub fn surface_gradient(mesh: &SurfaceMesh, field: &ScalarField) -> Result<Vec<Vec3>, GeometryError> {
    if field.values.len() != mesh.n_vertices() {
        return Err(GeometryError::FieldLength { expected: mesh.n_vertices(), got: field.values.len() });
    }
    let ops = gradient_operators(mesh)?;
    Ok(mesh
        .triangles
        .iter()
        .zip(&ops)
        .map(|(tri, op)| tri.iter().zip(&op.grad_basis).map(|(&i, g)| g * field.values[i]).sum())
        .collect())
}

/// Area and barycentric-coordinate gradients of one flat triangle.
#[derive(Clone, Copy, Debug)]
pub struct TriangleOperator {
    pub area: f64,
    pub grad_basis: [Vec3; 3],
}

pub fn gradient_operators(mesh: &SurfaceMesh) -> Result<Vec<TriangleOperator>, GeometryError> {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(t, &[a, b, c])| {
            let x0 = mesh.vertices[a];
            let e1 = mesh.vertices[b] - x0;
            let e2 = mesh.vertices[c] - x0;
            let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
            let det = g11 * g22 - g12 * g12;
            if !(det > 1e-24 * g11 * g22) {
                return Err(GeometryError::DegenerateTriangle(t));
            }
            // dual basis of (e1, e2) inside the triangle plane
            let d1 = (e1 * g22 - e2 * g12) / det;
            let d2 = (e2 * g11 - e1 * g12) / det;
            Ok(TriangleOperator { area: 0.5 * det.sqrt(), grad_basis: [-(d1 + d2), d1, d2] })
        })
        .collect()
}

/// One-point barycentric value of a P1 field on every triangle.
pub fn barycentric_values(mesh: &SurfaceMesh, field: &ScalarField) -> Vec<f64> {
    mesh.triangles.iter().map(|&[a, b, c]| (field.values[a] + field.values[b] + field.values[c]) / 3.0).collect()
}

/// `sum_T area(T) |value_T|^p`; the integral itself, not its p-th root.
pub fn integrate_p_norm(mesh: &SurfaceMesh, per_triangle: &[f64], p: f64) -> Result<f64, GeometryError> {
    if !(p >= 1.0) {
        return Err(GeometryError::BadExponent(p));
    }
    if per_triangle.len() != mesh.n_triangles() {
        return Err(GeometryError::FieldLength { expected: mesh.n_triangles(), got: per_triangle.len() });
    }
    Ok((0..mesh.n_triangles()).map(|t| mesh.triangle_area(t) * per_triangle[t].abs().powf(p)).sum())
}

/// Plain-text export: `n_vertices n_triangles`, then `x y z flag` per vertex,
/// then `i j k` per triangle (0-based).
pub fn write_mesh_text<W: Write>(mesh: &SurfaceMesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", mesh.n_vertices(), mesh.n_triangles())?;
    for (v, &d) in mesh.vertices.iter().zip(&mesh.dirichlet) {
        writeln!(out, "{} {} {} {}", v.x, v.y, v.z, u8::from(d))?;
    }
    for [i, j, k] in &mesh.triangles {
        writeln!(out, "{i} {j} {k}")?;
    }
    Ok(())
}

/// Inverse of [`write_mesh_text`]. The sphere is not part of the format.
pub fn read_mesh_text<R: BufRead>(input: R, sphere: Sphere, level: u32) -> Result<SurfaceMesh, GeometryError> {
    let mut lines = input.lines();
    let mut next_line = || -> Result<String, GeometryError> {
        lines.next().ok_or_else(|| GeometryError::Parse("unexpected end of input".into()))?.map_err(Into::into)
    };
    let header = next_line()?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| GeometryError::Parse(format!("bad header {header:?}"))))
        .collect::<Result<_, _>>()?;
    let [nv, nt] = counts[..] else {
        return Err(GeometryError::Parse(format!("bad header {header:?}")));
    };
    let mut vertices = Vec::with_capacity(nv);
    let mut dirichlet = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = next_line()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(GeometryError::Parse(format!("bad vertex line {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| GeometryError::Parse(format!("bad number {s:?}")));
        vertices.push(Vec3::new(num(f[0])?, num(f[1])?, num(f[2])?));
        dirichlet.push(match f[3] {
            "0" => false,
            "1" => true,
            other => return Err(GeometryError::Parse(format!("bad flag {other:?}"))),
        });
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let line = next_line()?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| GeometryError::Parse(format!("bad index {s:?}"))))
            .collect::<Result<_, _>>()?;
        let [i, j, k] = idx[..] else {
            return Err(GeometryError::Parse(format!("bad triangle line {line:?}")));
        };
        triangles.push([i, j, k]);
    }
    SurfaceMesh::from_parts(sphere, level, vertices, triangles, dirichlet)
}
