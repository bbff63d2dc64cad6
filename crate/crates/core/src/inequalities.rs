//! Pointwise linear-algebra estimates behind the lower bound of the
//! variational constant, checked on explicit matrices and random families.
//!
//! Rows of `M` play the role of the differentials `df_i`. Every check
//! reports a relative slack: nonnegative means the inequality holds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::InequalityError;

/// Violations are counted below `-SLACK_TOL`.
pub const SLACK_TOL: f64 = 1e-9;

fn check_plane(n: usize, k: usize) -> Result<(), InequalityError> {
    if k < 1 || k + 2 > n {
        return Err(InequalityError::BadPlane { n, k });
    }
    Ok(())
}

/// `(rhs - lhs) / max(|lhs|, |rhs|)`, and 0 when both vanish.
pub fn relative_slack(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// Outcome of one inequality `lhs <= rhs`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl Check {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, slack: relative_slack(lhs, rhs) }
    }

    pub fn holds(&self) -> bool {
        self.slack >= -SLACK_TOL
    }
}

/// Spectral norm `max_{|h|=1} |M h|` from the eigenvalues of `M^T M`.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let ev = (m.transpose() * m).symmetric_eigenvalues();
    ev.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt()
}

/// Rows of `m` except row `i` (1-based).
fn rows_without(m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    m.clone().remove_row(i - 1)
}

/// `|df_1 ^ ... ^ (df_i omitted) ^ ... ^ df_n|`, i.e. `sqrt(det(G G^T))` for
/// the remaining rows `G`, evaluated as `|det R|` of the QR factor of `G^T`.
pub fn wedge_minor_norm(m: &DMatrix<f64>, i: usize) -> Result<f64, InequalityError> {
    let n = m.nrows();
    if i < 1 || i > n {
        return Err(InequalityError::BadRow { i, n });
    }
    let r = rows_without(m, i).transpose().qr().r();
    Ok(r.diagonal().iter().map(|d| d.abs()).product())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HadamardWedge {
    /// `|wedge|^(2/(n-1)) <= (1/(n-1)) sum_{s != i} |row_s|^2`
    pub mean: Check,
    /// `|wedge| <= ||M||^(n-1)`
    pub norm: Check,
}

pub fn check_hadamard_wedge(m: &DMatrix<f64>, i: usize) -> Result<HadamardWedge, InequalityError> {
    let n = m.nrows();
    let w = wedge_minor_norm(m, i)?;
    let e = (n - 1) as f64;
    let mean_sq = (0..n).filter(|&s| s != i - 1).map(|s| m.row(s).norm_squared()).sum::<f64>() / e;
    Ok(HadamardWedge { mean: Check::new(w.powf(2.0 / e), mean_sq), norm: Check::new(w, operator_norm(m).powf(e)) })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RowGradient {
    /// `|r_i|^2 + |r_i|^-2 sum_{s != i} <r_s, r_i>^2 <= ||M||^2`
    pub projection: Check,
    /// Worst of `|<r_i, h>| <= ||M||` over random unit `h`.
    pub directions: Check,
}

/// `None` when row `i` vanishes.
pub fn check_row_gradient_bound<R: Rng>(
    m: &DMatrix<f64>,
    i: usize,
    rng: &mut R,
) -> Result<Option<RowGradient>, InequalityError> {
    let n = m.nrows();
    if i < 1 || i > n {
        return Err(InequalityError::BadRow { i, n });
    }
    let ri = m.row(i - 1).transpose();
    let r2 = ri.norm_squared();
    if r2 == 0.0 {
        return Ok(None);
    }
    let cross: f64 = (0..n).filter(|&s| s != i - 1).map(|s| m.row(s).dot(&ri.transpose()).powi(2)).sum();
    let norm = operator_norm(m);
    let projection = Check::new(r2 + cross / r2, norm * norm);
    let mut worst = Check::new(0.0, norm);
    for _ in 0..32 {
        let h = random_unit(rng, n);
        let c = Check::new(ri.dot(&h).abs(), norm);
        if c.slack < worst.slack {
            worst = c;
        }
    }
    Ok(Some(RowGradient { projection, directions: worst }))
}

/// `c1 = (n-k)^(n/(2(n-1)))`, `c2 = (n-k)^((n-2)/(2n))`, `c3 = (n-k)^(n/2)`.
pub fn constants(n: usize, k: usize) -> Result<(f64, f64, f64), InequalityError> {
    check_plane(n, k)?;
    let (m, nf) = ((n - k) as f64, n as f64);
    Ok((m.powf(nf / (2.0 * (nf - 1.0))), m.powf((nf - 2.0) / (2.0 * nf)), m.powf(nf / 2.0)))
}

/// `phi = sum_{i=k+1}^n |wedge_i|^2` and `phi^(n/(2(n-1))) <= c1 ||M||^n`.
pub fn check_phi_bound(m: &DMatrix<f64>, k: usize) -> Result<Check, InequalityError> {
    let n = m.nrows();
    let (c1, _, _) = constants(n, k)?;
    let mut phi = 0.0;
    for i in k + 1..=n {
        phi += wedge_minor_norm(m, i)?.powi(2);
    }
    let e = n as f64 / (2.0 * (n as f64 - 1.0));
    Ok(Check::new(phi.powf(e), c1 * operator_norm(m).powi(n as i32)))
}

fn power_mean(values: &[f64], t: f64) -> f64 {
    let n = values.len() as f64;
    (values.iter().map(|v| v.abs().powf(t)).sum::<f64>() / n).powf(1.0 / t)
}

/// `M_{t1}(a) <= M_{t2}(a)` for power means with `1 <= t1 <= t2`.
pub fn check_power_mean(values: &[f64], t1: f64, t2: f64) -> Result<Check, InequalityError> {
    if !(t1 >= 1.0 && t2 >= t1) {
        return Err(InequalityError::BadExponents { t1, t2 });
    }
    if values.is_empty() {
        return Err(InequalityError::Length { expected: 1, got: 0 });
    }
    Ok(Check::new(power_mean(values, t1), power_mean(values, t2)))
}

/// `(sum v_i^2)^(1/2) <= c2 (sum |v_i|^n)^(1/n)` for the `n-k` values.
pub fn check_vector_norm_reduction(values: &[f64], n: usize, k: usize) -> Result<Check, InequalityError> {
    let (_, c2, _) = constants(n, k)?;
    if values.len() != n - k {
        return Err(InequalityError::Length { expected: n - k, got: values.len() });
    }
    let l2 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ln = values.iter().map(|v| v.abs().powi(n as i32)).sum::<f64>().powf(1.0 / n as f64);
    Ok(Check::new(l2, c2 * ln))
}

/// `sum_{i=k+1}^n |P r_i|^n <= (n-k) ||M||^n` with `P` the projection onto
/// the hyperplane orthogonal to `normal`.
pub fn check_tangential_gradient_sum(
    m: &DMatrix<f64>,
    k: usize,
    normal: &DVector<f64>,
) -> Result<Check, InequalityError> {
    let n = m.nrows();
    check_plane(n, k)?;
    let nu = normal.normalize();
    let mut lhs = 0.0;
    for i in k..n {
        let r = m.row(i).transpose();
        let t = &r - &nu * nu.dot(&r);
        lhs += t.norm().powi(n as i32);
    }
    Ok(Check::new(lhs, (n - k) as f64 * operator_norm(m).powi(n as i32)))
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFamily {
    Gaussian,
    Orthogonal,
    RankDeficient,
    IllConditioned,
}

impl MatrixFamily {
    pub const ALL: [MatrixFamily; 4] =
        [MatrixFamily::Gaussian, MatrixFamily::Orthogonal, MatrixFamily::RankDeficient, MatrixFamily::IllConditioned];
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column signs so the distribution is Haar
    let signs = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// A random `n x n` matrix from the given family.
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, family: MatrixFamily) -> DMatrix<f64> {
    match family {
        MatrixFamily::Gaussian => gaussian(rng, n, n),
        MatrixFamily::Orthogonal => random_orthogonal(rng, n),
        MatrixFamily::RankDeficient => {
            let rank = rng.random_range(0..n);
            gaussian(rng, n, rank.max(1)) * gaussian(rng, rank.max(1), n) * if rank == 0 { 0.0 } else { 1.0 }
        }
        MatrixFamily::IllConditioned => {
            let u = random_orthogonal(rng, n);
            let v = random_orthogonal(rng, n);
            let decades = rng.random_range(0.0..8.0);
            let s = DVector::from_fn(n, |i, _| {
                if i == 0 {
                    1.0
                } else if i == n - 1 {
                    10f64.powf(-decades)
                } else {
                    10f64.powf(-rng.random_range(0.0..decades))
                }
            });
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            u * DMatrix::from_diagonal(&s) * v.transpose() * scale
        }
    }
}

/// Counts and worst slacks of one property suite.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteSummary {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub checks: Vec<CheckTally>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckTally {
    pub name: &'static str,
    pub evaluated: usize,
    pub violations: usize,
    pub worst_slack: f64,
}

impl SuiteSummary {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

const CHECK_NAMES: [&str; 8] = [
    "hadamard_wedge_mean",
    "hadamard_wedge_norm",
    "row_gradient_projection",
    "row_gradient_directions",
    "phi_bound",
    "power_mean",
    "vector_norm_reduction",
    "tangential_gradient_sum",
];

fn tally_into(tallies: &mut [CheckTally], idx: usize, c: &Check) {
    let t = &mut tallies[idx];
    t.evaluated += 1;
    if !c.holds() {
        t.violations += 1;
    }
    t.worst_slack = t.worst_slack.min(c.slack);
}

fn empty_tallies() -> Vec<CheckTally> {
    CHECK_NAMES
        .iter()
        .map(|&name| CheckTally { name, evaluated: 0, violations: 0, worst_slack: f64::INFINITY })
        .collect()
}

/// One random trial: a matrix from the family cycle plus random value lists.
fn trial<R: Rng>(
    rng: &mut R,
    n: usize,
    k: usize,
    index: usize,
    tallies: &mut [CheckTally],
) -> Result<(), InequalityError> {
    let family = MatrixFamily::ALL[index % MatrixFamily::ALL.len()];
    let m = random_matrix(rng, n, family);
    for i in 1..=n {
        let h = check_hadamard_wedge(&m, i)?;
        tally_into(tallies, 0, &h.mean);
        tally_into(tallies, 1, &h.norm);
        if let Some(g) = check_row_gradient_bound(&m, i, rng)? {
            tally_into(tallies, 2, &g.projection);
            tally_into(tallies, 3, &g.directions);
        }
    }
    tally_into(tallies, 4, &check_phi_bound(&m, k)?);
    let len = rng.random_range(1..=12);
    let values: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let t1 = rng.random_range(1.0..6.0);
    let t2 = rng.random_range(t1..=6.0);
    tally_into(tallies, 5, &check_power_mean(&values, t1, t2)?);
    let v: Vec<f64> = (0..n - k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    tally_into(tallies, 6, &check_vector_norm_reduction(&v, n, k)?);
    tally_into(tallies, 7, &check_tangential_gradient_sum(&m, k, &random_unit(rng, n))?);
    Ok(())
}

/// Trials per independently seeded chunk.
const CHUNK: usize = 1024;

/// Run all checks on `trials` random matrices for one `(n, k)`. Chunks use
/// their own ChaCha stream, so the result does not depend on thread count.
pub fn run_property_suite(n: usize, k: usize, trials: usize, seed: u64) -> Result<SuiteSummary, InequalityError> {
    check_plane(n, k)?;
    let chunks = trials.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((n as u64) << 48) ^ ((k as u64) << 40) ^ c as u64);
            let mut tallies = empty_tallies();
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                trial(&mut rng, n, k, t, &mut tallies)?;
            }
            Ok(tallies)
        })
        .collect::<Result<Vec<_>, InequalityError>>()?;
    let mut checks = empty_tallies();
    for part in partial {
        for (acc, p) in checks.iter_mut().zip(part) {
            acc.evaluated += p.evaluated;
            acc.violations += p.violations;
            acc.worst_slack = acc.worst_slack.min(p.worst_slack);
        }
    }
    Ok(SuiteSummary { n, k, trials, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `det(G G^T)` by Cauchy-Binet: the sum of squared maximal minors.
    fn cauchy_binet(g: &DMatrix<f64>) -> f64 {
        let (rows, cols) = g.shape();
        let mut total = 0.0;
        let mut subset: Vec<usize> = (0..rows).collect();
        loop {
            let minor = DMatrix::from_fn(rows, rows, |a, b| g[(a, subset[b])]);
            total += minor.determinant().powi(2);
            // next combination
            let mut j = rows;
            loop {
                if j == 0 {
                    return total;
                }
                j -= 1;
                if subset[j] < cols - rows + j {
                    break;
                }
                if j == 0 {
                    return total;
                }
            }
            subset[j] += 1;
            for l in j + 1..rows {
                subset[l] = subset[l - 1] + 1;
            }
        }
    }

    #[test]
    fn wedge_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((wedge_minor_norm(&id, 3).unwrap() - 1.0).abs() < 1e-15);
        let dup = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 9.0, 9.0, 9.0, 1.0, 2.0, 3.0]);
        assert!(wedge_minor_norm(&dup, 2).unwrap() < 1e-14);
        assert!(wedge_minor_norm(&id, 0).is_err());
    }

    #[test]
    fn wedge_matches_minor_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=6 {
            for _ in 0..50 {
                let m = gaussian(&mut rng, n, n);
                for i in 1..=n {
                    let oracle = cauchy_binet(&rows_without(&m, i)).sqrt();
                    let w = wedge_minor_norm(&m, i).unwrap();
                    assert!((w - oracle).abs() <= 1e-10 * oracle.max(1e-300), "n={n} i={i}: {w} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn equality_witnesses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..=5 {
            let q = random_orthogonal(&mut rng, n);
            for i in 1..=n {
                let h = check_hadamard_wedge(&q, i).unwrap();
                assert!(h.mean.slack.abs() < 1e-12 && h.norm.slack.abs() < 1e-12);
                let g = check_row_gradient_bound(&q, i, &mut rng).unwrap().unwrap();
                assert!(g.projection.slack.abs() < 1e-12);
            }
        }
        let phi = check_phi_bound(&DMatrix::identity(3, 3), 1).unwrap();
        assert!((phi.lhs - 2f64.powf(0.75)).abs() < 1e-15 && phi.slack.abs() < 1e-15);
        assert!(check_power_mean(&[2.5; 7], 1.0, 5.0).unwrap().slack.abs() < 1e-15);
        let c = check_vector_norm_reduction(&[1.0, 1.0], 4, 2).unwrap();
        assert!(c.holds());
    }

    #[test]
    fn fixed_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 1.0, 1.0]));
        let h = check_hadamard_wedge(&d, 1).unwrap();
        assert_eq!((h.norm.lhs, h.norm.rhs), (1.0, 4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = check_row_gradient_bound(&d, 2, &mut rng).unwrap().unwrap();
        assert_eq!((g.projection.lhs, g.projection.rhs), (1.0, 4.0));
        let zero = DMatrix::zeros(3, 3);
        let z = check_phi_bound(&zero, 1).unwrap();
        assert_eq!((z.lhs, z.rhs, z.slack), (0.0, 0.0, 0.0));
        assert!(check_row_gradient_bound(&zero, 1, &mut rng).unwrap().is_none());
        let pm = check_power_mean(&[1.0, 0.0], 1.0, 2.0).unwrap();
        assert!((pm.lhs - 0.5).abs() < 1e-15 && (pm.rhs - 0.5f64.sqrt()).abs() < 1e-15);
        let one = check_vector_norm_reduction(&[0.0, -3.0], 4, 2).unwrap();
        assert!(one.holds() && one.rhs >= one.lhs);
    }

    #[test]
    fn constants_values() {
        let (c1, c2, c3) = constants(3, 1).unwrap();
        assert!((c1 - 2f64.powf(0.75)).abs() < 1e-15);
        assert!((c2 - 2f64.powf(1.0 / 6.0)).abs() < 1e-15);
        assert!((c3 - 2f64.powf(1.5)).abs() < 1e-15);
        let (c1, c2, c3) = constants(4, 2).unwrap();
        assert!((c1 - 2f64.powf(2.0 / 3.0)).abs() < 1e-15);
        assert!((c2 - 2f64.powf(0.25)).abs() < 1e-15);
        assert!((c3 - 4.0).abs() < 1e-15);
        // c3 = (n-k) c2^n
        for (n, k) in [(3, 1), (4, 1), (4, 2), (5, 2), (5, 3)] {
            let (_, c2, c3) = constants(n, k).unwrap();
            assert!((c3 - (n - k) as f64 * c2.powi(n as i32)).abs() < 1e-12 * c3);
        }
        assert!(constants(3, 2).is_err() && constants(3, 0).is_err());
    }

    #[test]
    fn small_suite_is_clean_and_deterministic() {
        let a = run_property_suite(4, 2, 3000, 9).unwrap();
        let b = run_property_suite(4, 2, 3000, 9).unwrap();
        assert_eq!(a.violations(), 0);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.checks.iter().all(|c| c.evaluated > 0));
    }
}
