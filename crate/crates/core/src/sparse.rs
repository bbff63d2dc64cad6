//! Fixed-pattern CSR matrices assembled from triangle meshes, with a
//! Jacobi-preconditioned conjugate gradient restricted to free vertices.

use crate::geometry::SurfaceMesh;

/// Symmetric vertex-by-vertex matrix on the mesh adjacency pattern.
#[derive(Clone, Debug)]
pub struct MeshMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pub vals: Vec<f64>,
    /// `slots[t][a][b]` is the value index of entry `(tri[a], tri[b])`.
    slots: Vec<[[usize; 3]; 3]>,
}

impl MeshMatrix {
    pub fn pattern(mesh: &SurfaceMesh) -> Self {
        let adj = mesh.neighbors();
        let mut row_ptr = Vec::with_capacity(adj.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (i, nbrs) in adj.iter().enumerate() {
            let mut row: Vec<usize> = nbrs.clone();
            row.push(i);
            row.sort_unstable();
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }
        let find = |i: usize, j: usize| -> usize {
            let row = &cols[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + row.binary_search(&j).expect("pattern contains all triangle edges")
        };
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        s[a][b] = find(tri[a], tri[b]);
                    }
                }
                s
            })
            .collect();
        let nnz = cols.len();
        Self { row_ptr, cols, vals: vec![0.0; nnz], slots }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Add a 3x3 element matrix of triangle `t`.
    pub fn add_element(&mut self, t: usize, emat: &[[f64; 3]; 3]) {
        let s = &self.slots[t];
        for a in 0..3 {
            for b in 0..3 {
                self.vals[s[a][b]] += emat[a][b];
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
                self.vals[self.row_ptr[i] + row.binary_search(&i).unwrap()]
            })
            .collect()
    }

    /// `y = A x` on free rows; Dirichlet rows of `y` are zero.
    pub fn mul_masked(&self, x: &[f64], free: &[bool], y: &mut [f64]) {
        for i in 0..self.n() {
            if !free[i] {
                y[i] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[idx];
                if free[j] {
                    acc += self.vals[idx] * x[j];
                }
            }
            y[i] = acc;
        }
    }

    /// `x^T A x` over free entries.
    pub fn quadratic_form(&self, x: &[f64], free: &[bool]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.mul_masked(x, free, &mut y);
        dot(x, &y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve `A x = b` on the free entries by Jacobi-preconditioned CG, starting
/// from the incoming `x`. Dirichlet entries of `x` are forced to zero.
pub fn conjugate_gradient(
    a: &MeshMatrix,
    free: &[bool],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = a.n();
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = (0..n).map(|i| if free[i] && diag[i] > 0.0 { 1.0 / diag[i] } else { 0.0 }).collect();
    for i in 0..n {
        if !free[i] {
            x[i] = 0.0;
        }
    }
    let b_norm = (0..n).filter(|&i| free[i]).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, relative_residual: 0.0 };
    }
    let mut ax = vec![0.0; n];
    a.mul_masked(x, free, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| if free[i] { b[i] - ax[i] } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > rtol && it < max_iter {
        a.mul_masked(&p, free, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    CgOutcome { iterations: it, relative_residual: res }
}
