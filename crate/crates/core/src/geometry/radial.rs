//! Rotationally invariant functions on P^n in the compactified coordinate.
//!
//! With `s = log|z|^2` the Fubini-Study potential is `u(s) = log(1 + e^s)`,
//! so `u' = x` and `u'' = x(1 - x)` for `x = e^s / (1 + e^s)`. A potential
//! `psi = a*u + phi` has Hessian eigenvalue ratios against `omega_FS`
//!
//! ```text
//! A = psi'/u'   = a + (1 - x) phi_x        (tangential, multiplicity n - 1)
//! B = psi''/u'' = a + (x (1 - x) phi_x)_x  (radial)
//! ```
//!
//! and `x^(n-1) A^(n-1) B = (1/n) d/dx (a x + P)^n` with `P = x(1-x) phi_x`.
//! The Monge-Ampere density is discretized in that flux form on vertex-centred
//! cells, which makes `sum_p m_p dA_p = a^n V` exact.

use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    n: usize,
    nodes: Vec<f64>,
    h: f64,
    /// Cell faces `x_{p+1/2}`, one between each pair of nodes.
    faces: Vec<f64>,
    /// `x^n` differences across each node's cell.
    cells: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n: usize, size: usize) -> Self {
        assert!(n >= 1 && size >= 3);
        let h = 1.0 / (size - 1) as f64;
        let nodes: Vec<f64> = (0..size).map(|p| p as f64 * h).collect();
        let faces: Vec<f64> = (0..size - 1).map(|p| (p as f64 + 0.5) * h).collect();
        let cells = (0..size)
            .map(|p| {
                let right = if p + 1 == size {
                    1.0
                } else {
                    faces[p].powi(n as i32)
                };
                let left = if p == 0 {
                    0.0
                } else {
                    faces[p - 1].powi(n as i32)
                };
                right - left
            })
            .collect();
        Self {
            n,
            nodes,
            h,
            faces,
            cells,
        }
    }

    pub fn complex_dim(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Node volumes for `omega_FS^n`, total `(2 pi)^n`.
    pub fn weights(&self) -> Vec<f64> {
        let scale = (2.0 * std::f64::consts::PI).powi(self.n as i32);
        self.cells.iter().map(|c| c * scale).collect()
    }

    fn face_coefficient(&self, j: usize) -> f64 {
        let x = self.faces[j];
        x * (1.0 - x) / self.h
    }

    /// `tr_{omega_FS} i ddbar`, in flux form `x^(1-n) (x^n (1-x) v_x)_x`.
    pub fn laplacian(&self) -> SparseMatrix {
        let size = self.nodes.len();
        let nf = self.n as f64;
        let mut t = Vec::with_capacity(3 * size);
        for j in 0..size - 1 {
            let x = self.faces[j];
            let k = nf * x.powi(self.n as i32 - 1) * self.face_coefficient(j);
            // flux through face j leaves node j and enters node j+1
            t.push((j, j + 1, k / self.cells[j]));
            t.push((j, j, -k / self.cells[j]));
            t.push((j + 1, j, k / self.cells[j + 1]));
            t.push((j + 1, j + 1, -k / self.cells[j + 1]));
        }
        SparseMatrix::from_triplets(size, size, &t)
    }

    /// `(a x + P)^n` at each face for the total potential perturbation `psi`.
    fn face_fluxes(&self, a: f64, psi: &[f64]) -> Vec<f64> {
        (0..self.faces.len())
            .map(|j| {
                let p = self.face_coefficient(j) * (psi[j + 1] - psi[j]);
                (a * self.faces[j] + p).powi(self.n as i32)
            })
            .collect()
    }

    /// Monge-Ampere density of `a*omega_FS + i ddbar psi` against `omega_FS^n`.
    pub fn density(&self, a: f64, psi: &[f64]) -> Vec<f64> {
        let size = self.nodes.len();
        let q = self.face_fluxes(a, psi);
        let top = a.powi(self.n as i32);
        (0..size)
            .map(|p| {
                let right = if p + 1 == size { top } else { q[p] };
                let left = if p == 0 { 0.0 } else { q[p - 1] };
                (right - left) / self.cells[p]
            })
            .collect()
    }

    /// Jacobian of [`density`](Self::density) with respect to `psi`.
    pub fn density_jacobian(&self, a: f64, psi: &[f64]) -> SparseMatrix {
        let size = self.nodes.len();
        let nf = self.n as f64;
        let mut t = Vec::with_capacity(4 * size);
        for j in 0..size - 1 {
            let c = self.face_coefficient(j);
            let base = a * self.faces[j] + c * (psi[j + 1] - psi[j]);
            let dq = nf * base.powi(self.n as i32 - 1) * c;
            t.push((j, j + 1, dq / self.cells[j]));
            t.push((j, j, -dq / self.cells[j]));
            t.push((j + 1, j + 1, -dq / self.cells[j + 1]));
            t.push((j + 1, j, dq / self.cells[j + 1]));
        }
        SparseMatrix::from_triplets(size, size, &t)
    }

    /// Second-order nodal derivative `d/dx`, one-sided at the ends.
    pub fn derivative(&self, v: &[f64]) -> Vec<f64> {
        let size = v.len();
        let h2 = 2.0 * self.h;
        (0..size)
            .map(|p| {
                if p == 0 {
                    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / h2
                } else if p + 1 == size {
                    (3.0 * v[p] - 4.0 * v[p - 1] + v[p - 2]) / h2
                } else {
                    (v[p + 1] - v[p - 1]) / h2
                }
            })
            .collect()
    }

    /// Tangential ratio `A = a + (1 - x) psi_x` at each node.
    pub fn tangential_ratio(&self, a: f64, psi: &[f64]) -> Vec<f64> {
        self.derivative(psi)
            .iter()
            .zip(&self.nodes)
            .map(|(d, x)| a + (1.0 - x) * d)
            .collect()
    }

    /// Per-node Dirichlet energy density `x(1-x) v_x^2` times node volume,
    /// split evenly between the two nodes of each face.
    pub fn gradient_energy(&self, v: &[f64]) -> Vec<f64> {
        let size = self.nodes.len();
        let scale = (2.0 * std::f64::consts::PI).powi(self.n as i32);
        let nf = self.n as f64;
        let mut e = vec![0.0; size];
        for j in 0..size - 1 {
            let x = self.faces[j];
            let dv = v[j + 1] - v[j];
            let face = scale * nf * x.powi(self.n as i32 - 1) * self.face_coefficient(j) * dv * dv;
            e[j] += 0.5 * face;
            e[j + 1] += 0.5 * face;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_gives_constant_density() {
        for n in 1..=3 {
            let g = RadialGrid::new(n, 33);
            let m = g.density(1.7, &vec![0.0; 33]);
            for v in m {
                assert!((v - 1.7f64.powi(n as i32)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn density_is_conservative() {
        let g = RadialGrid::new(2, 40);
        let psi: Vec<f64> = g.nodes().iter().map(|x| 0.1 * (3.0 * x).sin()).collect();
        let m = g.density(1.5, &psi);
        let w = g.weights();
        let total: f64 = m.iter().zip(&w).map(|(a, b)| a * b).sum();
        let vol: f64 = w.iter().sum();
        assert!((total - 1.5f64.powi(2) * vol).abs() < 1e-10 * vol);
    }

    #[test]
    fn laplacian_matches_linearized_density() {
        let g = RadialGrid::new(3, 25);
        let jac = g.density_jacobian(1.0, &vec![0.0; 25]);
        let lap = g.laplacian();
        for (r, c, v) in lap.triplets() {
            assert!((jac.get(r, c) - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for n in 1..=3 {
            let g = RadialGrid::new(n, 21);
            let psi: Vec<f64> = g.nodes().iter().map(|x| 0.2 * (2.0 * x).sin()).collect();
            let jac = g.density_jacobian(0.9, &psi);
            let dir: Vec<f64> = g.nodes().iter().map(|x| (5.0 * x).cos()).collect();
            let eps = 1e-6;
            let plus: Vec<f64> = psi.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = psi.iter().zip(&dir).map(|(a, b)| a - eps * b).collect();
            let (mp, mm) = (g.density(0.9, &plus), g.density(0.9, &minus));
            let jd = jac.mul_vec(&dir);
            for p in 0..21 {
                let fd = (mp[p] - mm[p]) / (2.0 * eps);
                assert!(
                    (fd - jd[p]).abs() < 1e-6 * jd[p].abs().max(1.0),
                    "n={n} p={p}"
                );
            }
        }
    }
}
