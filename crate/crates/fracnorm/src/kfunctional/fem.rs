//! Piecewise-linear finite element plumbing: CSR matrices, mass/stiffness
//! assembly (optionally with per-quadrature-point weights) and a Jacobi
//! preconditioned conjugate gradient solver.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::FieldFn;
use crate::meshing::Mesh;
use crate::quadrature::TRI6;
use crate::tri::Triangle;

/// Compressed sparse row matrix with a fixed symmetric sparsity pattern.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds the pattern of a finite element matrix from mesh connectivity.
    pub fn pattern(mesh: &Mesh) -> Csr {
        let n = mesh.n_vertices();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in &mesh.triangles {
            for &i in tri {
                for &j in tri {
                    if !cols[i].contains(&j) {
                        cols[i].push(j);
                    }
                }
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for c in &mut cols {
            c.sort_unstable();
            indices.extend_from_slice(c);
            indptr.push(indices.len());
        }
        let values = vec![0.0; indices.len()];
        Csr { n, indptr, indices, values }
    }

    pub fn slot(&self, i: usize, j: usize) -> usize {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        lo + self.indices[lo..hi].binary_search(&j).expect("entry in pattern")
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o = acc;
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = self.indptr[i];
                let hi = self.indptr[i + 1];
                match self.indices[lo..hi].binary_search(&i) {
                    Ok(k) => self.values[lo + k],
                    Err(_) => 0.0,
                }
            })
            .collect()
    }

    /// Dense copy (tests and small direct solves).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                dense[i][self.indices[k]] += self.values[k];
            }
        }
        dense
    }
}

/// Per-triangle quadrature weights for weighted assembly.
pub struct ElementWeights<'a> {
    /// Weight per (triangle, quadrature point) for mass-like terms.
    pub mass: Option<&'a [f64]>,
    /// Weight per triangle for stiffness-like terms.
    pub stiffness: Option<&'a [f64]>,
    /// Weight per (triangle, quadrature point) for the load vector; falls
    /// back to the mass weights when absent.
    pub load: Option<&'a [f64]>,
}

/// Precomputed per-triangle geometry reused by assembly loops.
pub struct ElementData {
    pub tris: Vec<Triangle>,
    pub areas: Vec<f64>,
    pub grads: Vec<[crate::geometry::Point2; 3]>,
    /// Barycentric basis values at the TRI6 points: `basis[q][k]`.
    pub basis: [[f64; 3]; 6],
    /// Physical quadrature points per triangle.
    pub qpts: Vec<[crate::geometry::Point2; 6]>,
}

impl ElementData {
    pub fn new(mesh: &Mesh) -> ElementData {
        let tris: Vec<Triangle> = (0..mesh.n_triangles()).map(|t| mesh.tri(t)).collect();
        let areas: Vec<f64> = tris.iter().map(|t| t.area()).collect();
        let grads: Vec<_> = tris.iter().map(|t| t.hat_gradients()).collect();
        let mut basis = [[0.0; 3]; 6];
        for (q, &(l1, l2, _)) in TRI6.iter().enumerate() {
            basis[q] = [l1, l2, 1.0 - l1 - l2];
        }
        let qpts: Vec<[crate::geometry::Point2; 6]> = tris
            .iter()
            .map(|t| {
                let mut pts = [crate::geometry::Point2::new(0.0, 0.0); 6];
                for (q, &(l1, l2, _)) in TRI6.iter().enumerate() {
                    pts[q] = t.v[0] * l1 + t.v[1] * l2 + t.v[2] * (1.0 - l1 - l2);
                }
                pts
            })
            .collect();
        ElementData { tris, areas, grads, basis, qpts }
    }

    pub fn quad_weight(&self, t: usize, q: usize) -> f64 {
        TRI6[q].2 * self.areas[t]
    }
}

/// Assembles `mass_coeff * M_w1 + stiff_coeff * S_w3` into `out` and the
/// weighted load vector `b_i = sum w1 f phi_i` when `load` is given.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    mesh: &Mesh,
    data: &ElementData,
    out: &mut Csr,
    mass_coeff: f64,
    stiff_coeff: f64,
    weights: ElementWeights<'_>,
    load_of: Option<&FieldFn>,
    load: Option<&mut [f64]>,
) {
    out.clear();
    let mut rhs = load.map(|l| {
        l.iter_mut().for_each(|v| *v = 0.0);
        l
    });
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = data.areas[t];
        // Mass block with per-point weights.
        for q in 0..6 {
            let w = TRI6[q].2
                * area
                * weights.mass.map_or(1.0, |m| m[t * 6 + q])
                * mass_coeff;
            if w != 0.0 {
                for a in 0..3 {
                    for b in 0..3 {
                        let slot = out.slot(tri[a], tri[b]);
                        out.values[slot] += w * data.basis[q][a] * data.basis[q][b];
                    }
                }
            }
            if let (Some(f), Some(rhs)) = (load_of, rhs.as_deref_mut()) {
                let lw = weights
                    .load
                    .or(weights.mass)
                    .map_or(1.0, |m| m[t * 6 + q]);
                let wl = TRI6[q].2 * area * lw;
                let fv = f.eval(data.qpts[t][q]);
                for a in 0..3 {
                    rhs[tri[a]] += wl * fv * data.basis[q][a];
                }
            }
        }
        // Stiffness block: constant gradients per triangle.
        let sw = stiff_coeff * area * weights.stiffness.map_or(1.0, |s| s[t]);
        if sw != 0.0 {
            let g = &data.grads[t];
            for a in 0..3 {
                for b in 0..3 {
                    let slot = out.slot(tri[a], tri[b]);
                    out.values[slot] += sw * g[a].dot(g[b]);
                }
            }
        }
    }
}

/// Assembles the p = 2 normal equations `(M + l^2 (M + S)) h = M f`.
pub fn assemble_p2_system(mesh: &Mesh, data: &ElementData, l: f64, f: &FieldFn) -> (Csr, Vec<f64>) {
    let mut a = Csr::pattern(mesh);
    let mut b = vec![0.0; mesh.n_vertices()];
    assemble(
        mesh,
        data,
        &mut a,
        1.0 + l * l,
        l * l,
        ElementWeights { mass: None, stiffness: None, load: None },
        Some(f),
        Some(&mut b),
    );
    (a, b)
}

/// Jacobi-preconditioned conjugate gradients. Deterministic; fails on
/// breakdown or when the iteration cap is hit without convergence.
pub fn cg_solve(a: &Csr, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let mut x = x0.map_or(vec![0.0; n], |v| v.to_vec());
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= tol * b_norm {
            return Ok(x);
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Numeric("CG breakdown: matrix not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r_norm <= tol.max(1e-10) * 100.0 * b_norm {
        // Close enough for downstream upper-bound use.
        return Ok(x);
    }
    Err(Error::Numeric(format!(
        "CG failed to converge: residual {r_norm:.3e} vs target {:.3e}",
        tol * b_norm
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::meshing::triangulate;

    #[test]
    fn mass_matrix_integrates_one() {
        let mesh = triangulate(&DomainSpec::unit_square(), 0.25).unwrap();
        let data = ElementData::new(&mesh);
        let mut m = Csr::pattern(&mesh);
        assemble(
            &mesh,
            &data,
            &mut m,
            1.0,
            0.0,
            ElementWeights { mass: None, stiffness: None, load: None },
            None,
            None,
        );
        let total: f64 = m.values.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "sum of mass entries {total}");
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = triangulate(&DomainSpec::unit_square(), 0.25).unwrap();
        let data = ElementData::new(&mesh);
        let mut s = Csr::pattern(&mesh);
        assemble(
            &mesh,
            &data,
            &mut s,
            0.0,
            1.0,
            ElementWeights { mass: None, stiffness: None, load: None },
            None,
            None,
        );
        let ones = vec![1.0; mesh.n_vertices()];
        let mut out = vec![0.0; mesh.n_vertices()];
        s.matvec(&ones, &mut out);
        for v in out {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let mesh = triangulate(&DomainSpec::unit_square(), 0.25).unwrap();
        let data = ElementData::new(&mesh);
        let f = crate::field::FieldFn::linear(1.0, 0.0, 0.0);
        let (a, b) = assemble_p2_system(&mesh, &data, 0.1, &f);
        let x = cg_solve(&a, &b, None, 1e-12, 10 * a.n).unwrap();
        let mut ax = vec![0.0; a.n];
        a.matvec(&x, &mut ax);
        let err: f64 = ax
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "residual {err}");
    }
}
