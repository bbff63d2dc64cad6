//! Explicit quasiconformal self-maps of R^n with analytic Jacobians.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::MapError;

pub type Point = DVector<f64>;

#[derive(Clone, Debug)]
enum Kind {
    Identity,
    Linear { matrix: DMatrix<f64>, inverse: DMatrix<f64> },
    RadialStretch { alpha: f64 },
    ShearBump { amplitude: f64, center: Point, width: f64 },
    Compose { outer: Box<QcMap>, inner: Box<QcMap> },
    Inverse(Box<QcMap>),
}

/// A sense-preserving quasiconformal map of R^n.
#[derive(Clone, Debug)]
pub struct QcMap {
    dim: usize,
    kind: Kind,
    label: String,
}

impl fmt::Display for QcMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

fn check_dim(n: usize) -> Result<(), MapError> {
    if n < 2 {
        return Err(MapError::BadDimension(n));
    }
    Ok(())
}

impl QcMap {
    pub fn identity(n: usize) -> Result<Self, MapError> {
        check_dim(n)?;
        Ok(Self { dim: n, kind: Kind::Identity, label: format!("identity:n={n}") })
    }

    /// `x -> |x|^(alpha-1) x`.
    pub fn radial_stretch(n: usize, alpha: f64) -> Result<Self, MapError> {
        check_dim(n)?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(MapError::NonPositiveExponent(alpha));
        }
        Ok(Self { dim: n, kind: Kind::RadialStretch { alpha }, label: format!("radial_stretch:n={n};alpha={alpha}") })
    }

    pub fn linear(matrix: DMatrix<f64>) -> Result<Self, MapError> {
        let n = matrix.nrows();
        check_dim(n)?;
        if matrix.ncols() != n {
            return Err(MapError::Shape { rows: n, cols: matrix.ncols(), n });
        }
        let det = matrix.determinant();
        if !(det > 0.0) {
            return Err(MapError::BadLinear(det));
        }
        let inverse = matrix.clone().try_inverse().ok_or(MapError::BadLinear(det))?;
        let entries: Vec<String> = matrix.transpose().iter().map(|v| v.to_string()).collect();
        let label = format!("linear:n={n};matrix={}", entries.join(","));
        Ok(Self { dim: n, kind: Kind::Linear { matrix, inverse }, label })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self, MapError> {
        Self::linear(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `x -> x + psi(x) e_n` with `psi(x) = c exp(-|x - x0|^2 / s^2)`.
    ///
    /// Injective iff `x_n + psi` is increasing in `x_n`; guaranteed by
    /// `sup |grad psi| = |c| sqrt(2) e^(-1/2) / s < 1`.
    pub fn shear_bump(n: usize, amplitude: f64, center: Point, width: f64) -> Result<Self, MapError> {
        check_dim(n)?;
        if center.len() != n {
            return Err(MapError::DimensionMismatch(n, center.len()));
        }
        if !(width > 0.0) {
            return Err(MapError::NonPositiveWidth(width));
        }
        let sup = shear_bump_gradient_bound(amplitude, width);
        if !(sup < 1.0) {
            return Err(MapError::NotHomeomorphic(sup));
        }
        let x0: Vec<String> = center.iter().map(|v| v.to_string()).collect();
        let label = format!("shear_bump:n={n};c={amplitude};s={width};x0={}", x0.join(","));
        Ok(Self { dim: n, kind: Kind::ShearBump { amplitude, center, width }, label })
    }

    /// The default bump used in the experiments: n = 3, c = 0.3, s = 1, x0 = 0.
    pub fn default_shear_bump() -> Self {
        Self::shear_bump(3, 0.3, Point::zeros(3), 1.0).expect("default bump is a homeomorphism")
    }

    /// `f o g`.
    pub fn compose(f: &QcMap, g: &QcMap) -> Result<Self, MapError> {
        if f.dim != g.dim {
            return Err(MapError::DimensionMismatch(f.dim, g.dim));
        }
        Ok(Self {
            dim: f.dim,
            kind: Kind::Compose { outer: Box::new(f.clone()), inner: Box::new(g.clone()) },
            label: format!("{}@{}", f.label, g.label),
        })
    }

    /// The inverse map, when `inverse_eval` is available.
    pub fn inverse(&self) -> Option<QcMap> {
        if !self.has_inverse() {
            return None;
        }
        Some(match &self.kind {
            Kind::Identity => self.clone(),
            Kind::RadialStretch { alpha } => QcMap::radial_stretch(self.dim, 1.0 / alpha).ok()?,
            Kind::Linear { inverse, .. } => QcMap::linear(inverse.clone()).ok()?,
            Kind::Inverse(inner) => (**inner).clone(),
            _ => QcMap {
                dim: self.dim,
                kind: Kind::Inverse(Box::new(self.clone())),
                label: format!("inverse({})", self.label),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &Point) -> Point {
        match &self.kind {
            Kind::Identity => x.clone(),
            Kind::Linear { matrix, .. } => matrix * x,
            Kind::RadialStretch { alpha } => {
                let r = x.norm();
                if r == 0.0 {
                    x.clone()
                } else {
                    x * r.powf(alpha - 1.0)
                }
            }
            Kind::ShearBump { amplitude, center, width } => {
                let mut y = x.clone();
                y[self.dim - 1] += bump(*amplitude, center, *width, x);
                y
            }
            Kind::Compose { outer, inner } => outer.eval(&inner.eval(x)),
            Kind::Inverse(inner) => inner.inverse_eval(x).expect("inverse map built from invertible map"),
        }
    }

    /// The formal derivative `f'(x)`; `None` on the singular set.
    pub fn jacobian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let n = self.dim;
        match &self.kind {
            Kind::Identity => Some(DMatrix::identity(n, n)),
            Kind::Linear { matrix, .. } => Some(matrix.clone()),
            Kind::RadialStretch { alpha } => {
                let r = x.norm();
                if r == 0.0 {
                    return if *alpha == 1.0 { Some(DMatrix::identity(n, n)) } else { None };
                }
                let u = x / r;
                let mut m = DMatrix::identity(n, n) + (&u * u.transpose()) * (alpha - 1.0);
                m *= r.powf(alpha - 1.0);
                Some(m)
            }
            Kind::ShearBump { amplitude, center, width } => {
                let mut m = DMatrix::identity(n, n);
                let g = bump_gradient(*amplitude, center, *width, x);
                for j in 0..n {
                    m[(n - 1, j)] += g[j];
                }
                Some(m)
            }
            Kind::Compose { outer, inner } => Some(outer.jacobian(&inner.eval(x))? * inner.jacobian(x)?),
            Kind::Inverse(inner) => inner.jacobian(&inner.inverse_eval(x)?)?.try_inverse(),
        }
    }

    pub fn has_inverse(&self) -> bool {
        match &self.kind {
            Kind::Compose { outer, inner } => outer.has_inverse() && inner.has_inverse(),
            _ => true,
        }
    }

    pub fn inverse_eval(&self, y: &Point) -> Option<Point> {
        match &self.kind {
            Kind::Identity => Some(y.clone()),
            Kind::Linear { inverse, .. } => Some(inverse * y),
            Kind::RadialStretch { alpha } => {
                let r = y.norm();
                Some(if r == 0.0 { y.clone() } else { y * r.powf(1.0 / alpha - 1.0) })
            }
            Kind::ShearBump { amplitude, center, width } => Some(shear_bump_inverse(*amplitude, center, *width, y)),
            Kind::Compose { outer, inner } => inner.inverse_eval(&outer.inverse_eval(y)?),
            Kind::Inverse(inner) => Some(inner.eval(y)),
        }
    }

    /// Closed-form outer dilatation, when known.
    pub fn declared_ko(&self) -> Option<f64> {
        let n = self.dim as f64;
        match &self.kind {
            Kind::Identity => Some(1.0),
            Kind::RadialStretch { alpha } => Some(alpha.max(1.0).powf(n) / alpha),
            Kind::Linear { matrix, .. } => {
                let (smax, _, det) = singular_extremes(matrix);
                Some((smax.powf(n) / det).max(1.0))
            }
            _ => None,
        }
    }

    /// Closed-form inner dilatation, when known.
    pub fn declared_ki(&self) -> Option<f64> {
        let n = self.dim as f64;
        match &self.kind {
            Kind::Identity => Some(1.0),
            Kind::RadialStretch { alpha } => Some(alpha / alpha.min(1.0).powf(n)),
            Kind::Linear { matrix, .. } => {
                let (_, smin, det) = singular_extremes(matrix);
                Some((det / smin.powf(n)).max(1.0))
            }
            _ => None,
        }
    }

    pub fn declared_k(&self) -> Option<f64> {
        Some(self.declared_ko()?.max(self.declared_ki()?))
    }

    /// `|f_{k+1..n}(x)|`, the distance of `f(x)` from the coordinate k-plane.
    pub fn perp_norm(&self, x: &Point, k: usize) -> f64 {
        let y = self.eval(x);
        y.rows(k, self.dim - k).norm()
    }

    /// A point of the quasiplane `f^{-1}(Pi^k_0)` near `start`, by minimum-norm
    /// Gauss-Newton on the last n-k coordinates of `f`.
    pub fn point_on_plane(&self, k: usize, start: &Point) -> Option<Point> {
        let n = self.dim;
        let mut x = start.clone();
        for _ in 0..100 {
            let y = self.eval(&x);
            let r = y.rows(k, n - k).into_owned();
            if r.norm() <= 1e-14 * (1.0 + x.norm()) {
                return Some(x);
            }
            let b = self.jacobian(&x)?.rows(k, n - k).into_owned();
            let gram = &b * b.transpose();
            let step = b.transpose() * gram.cholesky()?.solve(&r);
            x -= step;
        }
        (self.perp_norm(&x, k) <= 1e-10).then_some(x)
    }

    /// The natural base point for experiments: the origin when it lies on
    /// the quasiplane, otherwise the Gauss-Newton projection of the origin.
    pub fn base_point(&self, k: usize) -> Option<Point> {
        self.point_on_plane(k, &Point::zeros(self.dim))
    }

    /// Parse a registry spec, e.g. `radial_stretch:alpha=0.5` or
    /// `linear:diag=2,1,1`; `f@g` composes. See [`registry`] for the grammar.
    pub fn parse(spec: &str) -> Result<QcMap, MapError> {
        let mut parts = spec.split('@').map(parse_term).collect::<Result<Vec<_>, _>>()?;
        let mut map = parts.pop().ok_or_else(|| MapError::Parse("empty map spec".into()))?;
        while let Some(outer) = parts.pop() {
            map = QcMap::compose(&outer, &map)?;
        }
        Ok(map)
    }
}

/// Registered map ids with their parameters, as shown by `maps list`.
pub fn registry() -> Vec<(&'static str, &'static str)> {
    vec![
        ("identity", "n=3"),
        ("radial_stretch", "n=3;alpha=<positive real>"),
        ("linear", "n=3;diag=<d1,..,dn> | matrix=<row-major n*n entries>; det > 0"),
        ("shear_bump", "n=3;c=0.3;s=1;x0=<n coordinates, default 0>"),
        ("<spec>@<spec>", "composition f@g = f o g"),
    ]
}

fn parse_term(term: &str) -> Result<QcMap, MapError> {
    let term = term.trim();
    let (name, params) = term.split_once(':').unwrap_or((term, ""));
    let mut kv = std::collections::BTreeMap::new();
    for p in params.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = p.split_once('=').ok_or_else(|| MapError::Parse(format!("expected key=value, got {p:?}")))?;
        let values = v
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| MapError::Parse(format!("bad number {s:?} in {p:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        kv.insert(k.trim().to_string(), values);
    }
    let scalar = |key: &str, default: Option<f64>| -> Result<f64, MapError> {
        match kv.get(key) {
            Some(v) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(MapError::Parse(format!("{key} expects one number"))),
            None => default.ok_or_else(|| MapError::Parse(format!("{name} requires {key}"))),
        }
    };
    let n = scalar("n", Some(3.0))?;
    if n.fract() != 0.0 || n < 2.0 {
        return Err(MapError::Parse(format!("bad dimension {n}")));
    }
    let n = n as usize;
    let allowed: &[&str] = match name {
        "identity" => &["n"],
        "radial_stretch" => &["n", "alpha"],
        "linear" => &["n", "diag", "matrix"],
        "shear_bump" => &["n", "c", "s", "x0"],
        other => return Err(MapError::Parse(format!("unknown map id {other:?}"))),
    };
    if let Some(bad) = kv.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(MapError::Parse(format!("unknown parameter {bad:?} for {name}")));
    }
    match name {
        "identity" => QcMap::identity(n),
        "radial_stretch" => QcMap::radial_stretch(n, scalar("alpha", None)?),
        "linear" => match (kv.get("diag"), kv.get("matrix")) {
            (Some(d), None) if d.len() == n => QcMap::diagonal(d),
            (None, Some(m)) if m.len() == n * n => QcMap::linear(DMatrix::from_row_slice(n, n, m)),
            _ => Err(MapError::Parse(format!("linear needs diag with {n} or matrix with {} entries", n * n))),
        },
        "shear_bump" => {
            let x0 = match kv.get("x0") {
                Some(v) if v.len() == n => Point::from_column_slice(v),
                Some(_) => return Err(MapError::Parse(format!("x0 needs {n} coordinates"))),
                None => Point::zeros(n),
            };
            QcMap::shear_bump(n, scalar("c", Some(0.3))?, x0, scalar("s", Some(1.0))?)
        }
        _ => unreachable!(),
    }
}

pub fn shear_bump_gradient_bound(amplitude: f64, width: f64) -> f64 {
    amplitude.abs() * 2f64.sqrt() * (-0.5f64).exp() / width
}

fn bump(c: f64, x0: &Point, s: f64, x: &Point) -> f64 {
    c * (-(x - x0).norm_squared() / (s * s)).exp()
}

fn bump_gradient(c: f64, x0: &Point, s: f64, x: &Point) -> Point {
    let d = x - x0;
    d * (-2.0 * bump(c, x0, s, x) / (s * s))
}

fn shear_bump_inverse(c: f64, x0: &Point, s: f64, y: &Point) -> Point {
    let n = y.len();
    let target = y[n - 1];
    let mut x = y.clone();
    // x_n + psi is strictly increasing and |psi| <= |c|
    let (mut lo, mut hi) = (target - c.abs(), target + c.abs());
    let mut t = target - bump(c, x0, s, y);
    for _ in 0..200 {
        x[n - 1] = t;
        let g = t + bump(c, x0, s, &x) - target;
        if g.abs() <= 1e-16 * (1.0 + target.abs()) {
            break;
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let dg = 1.0 + bump_gradient(c, x0, s, &x)[n - 1];
        let newton = t - g / dg;
        t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 * (1.0 + target.abs()) {
            break;
        }
    }
    x[n - 1] = t;
    x
}

/// `(sigma_max, sigma_min, det)` of a square matrix, singular values from the
/// symmetric eigen-decomposition of `M^T M`.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64, f64) {
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0).sqrt();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0).sqrt();
    (max, min, m.determinant())
}

/// Pointwise distortion quantities of one Jacobian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointwiseDistortion {
    /// `||f'||`, the operator norm.
    pub norm: f64,
    /// `l(f')`, the smallest stretch.
    pub ell: f64,
    /// `J = det f'`.
    pub det: f64,
    /// `||f'||^n / J`.
    pub outer: f64,
    /// `J / l(f')^n`.
    pub inner: f64,
}

pub fn pointwise_distortion(jac: &DMatrix<f64>) -> PointwiseDistortion {
    let n = jac.nrows() as f64;
    let (norm, ell, det) = singular_extremes(jac);
    PointwiseDistortion { norm, ell, det, outer: norm.powf(n) / det, inner: det / ell.powf(n) }
}

/// A ball in R^n used as a sampling region.
#[derive(Clone, Debug, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DilatationEstimate {
    pub ko_est: f64,
    pub ki_est: f64,
    pub k_est: f64,
    pub sample_count: usize,
    /// Samples that hit the singular set and were skipped.
    pub skipped: usize,
    pub domain: String,
}

/// Sampled lower bounds of `K_O`, `K_I` and `K` over a ball: the maximum of
/// the pointwise ratios over uniform samples. Deterministic given `seed`;
/// a longer run with the same seed extends the shorter one.
pub fn estimate_dilatations(
    map: &QcMap,
    region: &Ball,
    samples: usize,
    seed: u64,
) -> Result<DilatationEstimate, MapError> {
    if samples == 0 {
        return Err(MapError::NoSamples);
    }
    if !(region.radius > 0.0) {
        return Err(MapError::EmptyRegion);
    }
    let n = map.dim();
    if region.center.len() != n {
        return Err(MapError::DimensionMismatch(n, region.center.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Point::from_column_slice(&region.center);
    let (mut ko, mut ki, mut skipped) = (1.0f64, 1.0f64, 0usize);
    for _ in 0..samples {
        let x = &center + sample_unit_ball(&mut rng, n) * region.radius;
        let Some(jac) = map.jacobian(&x) else {
            skipped += 1;
            continue;
        };
        let d = pointwise_distortion(&jac);
        if !(d.det > 0.0) {
            return Err(MapError::NotSensePreserving { det: d.det, point: x.iter().copied().collect() });
        }
        ko = ko.max(d.outer);
        ki = ki.max(d.inner);
    }
    Ok(DilatationEstimate {
        ko_est: ko,
        ki_est: ki,
        k_est: ko.max(ki),
        sample_count: samples,
        skipped,
        domain: format!("ball(center={:?}, radius={})", region.center, region.radius),
    })
}

/// Uniform sample from the unit ball by rejection from the cube.
pub fn sample_unit_ball<R: Rng>(rng: &mut R, n: usize) -> Point {
    loop {
        let x = Point::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if x.norm_squared() <= 1.0 {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    #[test]
    fn identity_basics() {
        let f = QcMap::identity(3).unwrap();
        assert_eq!(f.eval(&p(&[1.0, 2.0, 3.0])), p(&[1.0, 2.0, 3.0]));
        assert_eq!(f.jacobian(&p(&[0.3, -1.0, 2.0])).unwrap(), DMatrix::identity(3, 3));
        assert_eq!(f.declared_ko(), Some(1.0));
        assert_eq!(f.declared_ki(), Some(1.0));
        assert!(QcMap::identity(1).is_err());
    }

    #[test]
    fn radial_stretch_declared_dilatations() {
        let f = QcMap::radial_stretch(3, 0.5).unwrap();
        assert!((f.declared_ko().unwrap() - 2.0).abs() < 1e-15);
        assert!((f.declared_ki().unwrap() - 4.0).abs() < 1e-15);
        let g = QcMap::radial_stretch(3, 2.0).unwrap();
        assert!((g.declared_ko().unwrap() - 4.0).abs() < 1e-15);
        assert!((g.declared_ki().unwrap() - 2.0).abs() < 1e-15);
        let beta = g.declared_k().unwrap().powf(0.5);
        assert!((beta - 2.0).abs() < 1e-15);
        let one = QcMap::radial_stretch(3, 1.0).unwrap();
        assert_eq!(one.declared_k(), Some(1.0));
        assert!(QcMap::radial_stretch(3, 0.0).is_err());
    }

    #[test]
    fn radial_stretch_singular_values() {
        let alpha = 0.5;
        let f = QcMap::radial_stretch(3, alpha).unwrap();
        let x = p(&[0.3, -0.4, 1.2]);
        let r = x.norm();
        let eig = SymmetricEigen::new(f.jacobian(&x).unwrap().transpose() * f.jacobian(&x).unwrap());
        let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|v| v.sqrt()).collect();
        sv.sort_by(f64::total_cmp);
        let t = r.powf(alpha - 1.0);
        assert!((sv[0] - alpha * t).abs() < 1e-12);
        assert!((sv[1] - t).abs() < 1e-12 && (sv[2] - t).abs() < 1e-12);
        assert!(f.jacobian(&Point::zeros(3)).is_none());
    }

    #[test]
    fn linear_dilatations() {
        let f = QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap();
        assert!((f.declared_ko().unwrap() - 4.0).abs() < 1e-12);
        assert!((f.declared_ki().unwrap() - 2.0).abs() < 1e-12);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = QcMap::linear(DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((rot.declared_k().unwrap() - 1.0).abs() < 1e-12);
        assert!(QcMap::diagonal(&[-1.0, 1.0, 1.0]).is_err());
        assert!(QcMap::diagonal(&[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn shear_bump_construction_and_jacobian() {
        let zero = QcMap::shear_bump(3, 0.0, Point::zeros(3), 1.0).unwrap();
        let x = p(&[0.2, 0.4, -0.7]);
        assert_eq!(zero.eval(&x), x);
        let f = QcMap::default_shear_bump();
        // on the plane x_n = x0_n the n-th partial of psi vanishes
        let y = p(&[0.4, -0.3, 0.0]);
        assert!((f.jacobian(&y).unwrap().determinant() - 1.0).abs() < 1e-15);
        assert!(matches!(QcMap::shear_bump(3, 1.2, Point::zeros(3), 1.0), Err(MapError::NotHomeomorphic(_))));
    }

    #[test]
    fn shear_bump_inverse_round_trip() {
        let f = QcMap::default_shear_bump();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = sample_unit_ball(&mut rng, 3) * 3.0;
            let back = f.inverse_eval(&f.eval(&x)).unwrap();
            assert!((back - &x).norm() < 1e-9);
            let fwd = f.eval(&f.inverse_eval(&x).unwrap());
            assert!((fwd - x).norm() < 1e-9);
        }
    }

    fn central_difference_jacobian(f: &QcMap, x: &Point, h: f64) -> DMatrix<f64> {
        let n = f.dim();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (f.eval(&xp) - f.eval(&xm)) / (2.0 * h);
            m.set_column(j, &col);
        }
        m
    }

    #[test]
    fn analytic_jacobians_match_central_differences() {
        let maps = [
            QcMap::radial_stretch(3, 0.5).unwrap(),
            QcMap::radial_stretch(4, 2.0).unwrap(),
            QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap(),
            QcMap::default_shear_bump(),
            QcMap::compose(&QcMap::default_shear_bump(), &QcMap::radial_stretch(3, 0.7).unwrap()).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in &maps {
            for _ in 0..20 {
                let x = sample_unit_ball(&mut rng, f.dim()) * 2.0 + Point::from_element(f.dim(), 0.1);
                let fd = central_difference_jacobian(f, &x, 1e-5);
                let an = f.jacobian(&x).unwrap();
                assert!((fd - an).norm() < 1e-7, "{}", f.label());
            }
        }
    }

    #[test]
    fn composition_behaviour() {
        let g = QcMap::default_shear_bump();
        let id = QcMap::identity(3).unwrap();
        let c = QcMap::compose(&id, &g).unwrap();
        let x = p(&[0.1, 0.2, 0.3]);
        assert_eq!(c.eval(&x), g.eval(&x));
        assert_eq!(c.declared_ko(), None);
        let pair =
            QcMap::compose(&QcMap::radial_stretch(3, 2.0).unwrap(), &QcMap::radial_stretch(3, 0.5).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = sample_unit_ball(&mut rng, 3) * 4.0;
            assert!((pair.eval(&x) - &x).norm() < 1e-9 * (1.0 + x.norm()));
        }
        assert!(QcMap::compose(&QcMap::identity(2).unwrap(), &g).is_err());
        let inv = c.inverse().unwrap();
        assert!((inv.eval(&c.eval(&x)) - x).norm() < 1e-12);
    }

    #[test]
    fn dilatation_estimates() {
        let ball = Ball { center: vec![0.0; 3], radius: 2.0 };
        let id = estimate_dilatations(&QcMap::identity(3).unwrap(), &ball, 1000, 1).unwrap();
        assert_eq!((id.ko_est, id.ki_est), (1.0, 1.0));
        let rs = estimate_dilatations(&QcMap::radial_stretch(3, 0.5).unwrap(), &ball, 5000, 1).unwrap();
        assert!((rs.ko_est - 2.0).abs() < 1e-6 && (rs.ki_est - 4.0).abs() < 1e-6);
        assert_eq!(rs.k_est, rs.ko_est.max(rs.ki_est));
        let lin = estimate_dilatations(&QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap(), &ball, 100, 1).unwrap();
        assert!((lin.ko_est - 4.0).abs() < 1e-9 && (lin.ki_est - 2.0).abs() < 1e-9);
        assert!(matches!(estimate_dilatations(&QcMap::identity(3).unwrap(), &ball, 0, 1), Err(MapError::NoSamples)));
    }

    #[test]
    fn estimates_nondecreasing_in_sample_count() {
        let f = QcMap::default_shear_bump();
        let ball = Ball { center: vec![0.0; 3], radius: 3.0 };
        let mut prev = (1.0, 1.0);
        for samples in [10, 100, 1000, 10000] {
            let e = estimate_dilatations(&f, &ball, samples, 42).unwrap();
            assert!(e.ko_est >= prev.0 && e.ki_est >= prev.1);
            prev = (e.ko_est, e.ki_est);
        }
    }

    #[test]
    fn inverse_has_same_maximal_dilatation() {
        let f = QcMap::default_shear_bump();
        let inv = f.inverse().unwrap();
        let ball = Ball { center: vec![0.0; 3], radius: 3.0 };
        let kf = estimate_dilatations(&f, &ball, 100_000, 9).unwrap().k_est;
        let ki = estimate_dilatations(&inv, &ball, 100_000, 9).unwrap().k_est;
        assert!((kf - ki).abs() / kf < 0.02, "{kf} vs {ki}");
        let rs = QcMap::radial_stretch(3, 0.5).unwrap();
        assert_eq!(rs.inverse().unwrap().declared_k(), rs.declared_k());
    }

    #[test]
    fn parse_registry_specs() {
        let f = QcMap::parse("radial_stretch:alpha=0.5").unwrap();
        assert_eq!(f.declared_ki(), Some(4.0));
        let g = QcMap::parse("linear:diag=2,1,1").unwrap();
        assert!((g.declared_ko().unwrap() - 4.0).abs() < 1e-12);
        let h = QcMap::parse("shear_bump:c=0.3;s=1;x0=0,0,0").unwrap();
        assert_eq!(h.dim(), 3);
        let c = QcMap::parse("radial_stretch:alpha=2@radial_stretch:alpha=0.5").unwrap();
        let x = p(&[0.5, 0.5, 0.5]);
        assert!((c.eval(&x) - &x).norm() < 1e-12);
        assert!(QcMap::parse("nope").is_err());
        assert!(QcMap::parse("radial_stretch").is_err());
        assert!(QcMap::parse("identity:alpha=2").is_err());
        assert!(QcMap::parse("linear:diag=1,2").is_err());
    }

    #[test]
    fn base_point_of_default_bump_is_on_axis() {
        let f = QcMap::default_shear_bump();
        let a = f.base_point(1).unwrap();
        assert!(a[0].abs() < 1e-14 && a[1].abs() < 1e-14);
        // a3 solves a3 + 0.3 exp(-a3^2) = 0
        assert!((a[2] + 0.3 * (-a[2] * a[2]).exp()).abs() < 1e-13);
        assert!(f.perp_norm(&a, 1) < 1e-12);
    }
}
