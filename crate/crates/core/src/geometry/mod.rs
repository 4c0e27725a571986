//! Geometry backends: closed triangle meshes and the radial model of P^n.
//!
//! Both backends expose the same node-vector interface. The background
//! Laplacian follows the convention `Delta = tr_{omega_0} i ddbar`, which is
//! negative semidefinite and annihilates constants.

mod green;
mod mesh;
mod radial;
mod surface;

pub use mesh::TriangleMesh;
pub use radial::RadialGrid;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Sign of the exponential coupling: `+1` for anti-Fano, `-1` for Fano.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Fano,
    AntiFano,
}

impl Sign {
    pub fn sigma(self) -> f64 {
        match self {
            Sign::Fano => -1.0,
            Sign::AntiFano => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Fano => "fano",
            Sign::AntiFano => "antifano",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Surface(TriangleMesh),
    Radial(RadialGrid),
}

/// Discretized `(X, omega_0)`: node volumes, background Laplacian, and the
/// backend data needed for Monge-Ampere densities.
#[derive(Debug, Clone)]
pub struct DiscreteGeometry {
    backend: Backend,
    complex_dim: usize,
    weights: Vec<f64>,
    volume: f64,
    laplacian: SparseMatrix,
}

/// The classes `[theta_i]` with chosen representatives, the coupling sign,
/// and the normalization constants `C_i = int theta_i^n / int omega_0^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSplit {
    sign: Sign,
    constants: Vec<f64>,
    classes: Classes,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classes {
    /// Mesh backend: `f_i = theta_i / omega_0 > 0` per node.
    Densities(Vec<Vec<f64>>),
    /// Radial backend: `theta_i = a_i omega_FS + i ddbar g_i` with
    /// rotationally invariant offsets `g_i` (zero by default).
    Radial {
        coefficients: Vec<f64>,
        offsets: Vec<Vec<f64>>,
    },
}

impl BackgroundSplit {
    /// Mesh background from per-node densities.
    pub fn from_densities(
        geom: &DiscreteGeometry,
        densities: Vec<Vec<f64>>,
        sign: Sign,
    ) -> Result<Self> {
        if !matches!(geom.backend, Backend::Surface(_)) {
            return Err(Error::UnsupportedBackend(
                "per-node densities require the mesh backend".into(),
            ));
        }
        if densities.is_empty() {
            return Err(Error::BadSplitting("need at least one class".into()));
        }
        let mut constants = Vec::with_capacity(densities.len());
        for (i, f) in densities.iter().enumerate() {
            if f.len() != geom.num_nodes() {
                return Err(Error::BadSplitting(format!(
                    "density {i} has {} entries, expected {}",
                    f.len(),
                    geom.num_nodes()
                )));
            }
            if let Some(p) = f.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::BadSplitting(format!(
                    "density {i} is not positive at node {p} ({})",
                    f[p]
                )));
            }
            constants.push(geom.integrate(f) / geom.volume());
        }
        Ok(Self {
            sign,
            constants,
            classes: Classes::Densities(densities),
        })
    }

    /// Adds rotationally invariant potentials to the radial representatives,
    /// `theta_i = a_i omega_FS + i ddbar g_i`. The classes and `C_i` are unchanged.
    /// Unless `sum g_i` is constant, `Ric(omega_FS) = sum theta_i` no longer holds.
    pub fn with_potential_offsets(
        self,
        geom: &DiscreteGeometry,
        offsets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let Classes::Radial { coefficients, .. } = &self.classes else {
            return Err(Error::UnsupportedBackend(
                "potential offsets apply to the radial backend".into(),
            ));
        };
        if offsets.len() != coefficients.len()
            || offsets.iter().any(|g| g.len() != geom.num_nodes())
        {
            return Err(Error::BadSplitting("offset shape mismatch".into()));
        }
        let split = Self {
            classes: Classes::Radial {
                coefficients: coefficients.clone(),
                offsets,
            },
            ..self
        };
        for i in 0..split.k() {
            let zero = vec![0.0; geom.num_nodes()];
            let m = geom.ma_density(&split, i, &zero);
            if let Some(p) = m.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::BadSplitting(format!(
                    "offset {i} makes theta_{i} non-positive at node {p}"
                )));
            }
        }
        Ok(split)
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn k(&self) -> usize {
        self.constants.len()
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn classes(&self) -> &Classes {
        &self.classes
    }

    pub fn max_constant(&self) -> f64 {
        self.constants.iter().cloned().fold(f64::MIN, f64::max)
    }
}

impl DiscreteGeometry {
    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn is_mesh(&self) -> bool {
        matches!(self.backend, Backend::Surface(_))
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn complex_dim(&self) -> usize {
        self.complex_dim
    }

    /// Node volumes `dA`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }

    /// Applied in difference form `sum_q L_pq (v_q - v_p)`, so constants map
    /// to exactly zero.
    pub fn apply_laplacian(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.num_nodes());
        (0..self.num_nodes())
            .map(|p| {
                self.laplacian
                    .row(p)
                    .filter(|&(q, _)| q != p)
                    .map(|(q, w)| w * (v[q] - v[p]))
                    .sum()
            })
            .collect()
    }

    /// Symmetric stiffness `diag(dA) Delta`.
    pub fn stiffness(&self) -> SparseMatrix {
        self.laplacian.scale_rows(&self.weights)
    }

    /// `sum_p values(p) dA(p)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.num_nodes());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        self.integrate(values) / self.volume
    }

    /// Node positions in R^3 (radial nodes sit on the first axis at `x`).
    pub fn positions(&self) -> Vec<[f64; 3]> {
        match &self.backend {
            Backend::Surface(mesh) => mesh.vertices().to_vec(),
            Backend::Radial(grid) => grid.nodes().iter().map(|&x| [x, 0.0, 0.0]).collect(),
        }
    }

    /// `m_i[phi] = (theta_i + i ddbar phi)^n / omega_0^n` at each node.
    pub fn ma_density(&self, bg: &BackgroundSplit, i: usize, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.num_nodes());
        match (&self.backend, &bg.classes) {
            (Backend::Surface(_), Classes::Densities(f)) => {
                let lap = self.apply_laplacian(phi);
                f[i].iter().zip(lap).map(|(a, b)| a + b).collect()
            }
            (
                Backend::Radial(grid),
                Classes::Radial {
                    coefficients,
                    offsets,
                },
            ) => {
                let psi = add(&offsets[i], phi);
                grid.density(coefficients[i], &psi)
            }
            _ => panic!("background split does not match the geometry backend"),
        }
    }

    /// Explicit Jacobian of [`ma_density`](Self::ma_density) at `phi`.
    pub fn ma_linearization(&self, bg: &BackgroundSplit, i: usize, phi: &[f64]) -> SparseMatrix {
        match (&self.backend, &bg.classes) {
            (Backend::Surface(_), Classes::Densities(_)) => self.laplacian.clone(),
            (
                Backend::Radial(grid),
                Classes::Radial {
                    coefficients,
                    offsets,
                },
            ) => grid.density_jacobian(coefficients[i], &add(&offsets[i], phi)),
            _ => panic!("background split does not match the geometry backend"),
        }
    }

    /// Directional derivative `d/de m_i[phi + e delta]` at `e = 0`.
    pub fn ma_density_derivative(
        &self,
        bg: &BackgroundSplit,
        i: usize,
        phi: &[f64],
        delta: &[f64],
    ) -> Vec<f64> {
        self.ma_linearization(bg, i, phi).mul_vec(delta)
    }

    /// Per-node `sum_q |dm_p/dpsi_q| |psi_q|`, the magnitude of the terms that
    /// cancel when [`ma_density`](Self::ma_density) is evaluated.
    pub fn density_scale(&self, bg: &BackgroundSplit, i: usize, phi: &[f64]) -> Vec<f64> {
        let psi = match &bg.classes {
            Classes::Radial { offsets, .. } => add(&offsets[i], phi),
            Classes::Densities(_) => phi.to_vec(),
        };
        let jac = self.ma_linearization(bg, i, phi);
        (0..self.num_nodes())
            .map(|p| jac.row(p).map(|(q, v)| (v * psi[q]).abs()).sum())
            .collect()
    }

    /// `n + Delta_{theta_i} phi`, the sum of eigenvalue ratios of
    /// `theta_i + i ddbar phi` against `theta_i`.
    pub fn trace_wrt_theta(&self, bg: &BackgroundSplit, i: usize, phi: &[f64]) -> Vec<f64> {
        match (&self.backend, &bg.classes) {
            (Backend::Surface(_), Classes::Densities(f)) => {
                let lap = self.apply_laplacian(phi);
                f[i].iter().zip(lap).map(|(fi, l)| 1.0 + l / fi).collect()
            }
            (
                Backend::Radial(grid),
                Classes::Radial {
                    coefficients,
                    offsets,
                },
            ) => {
                let a = coefficients[i];
                let n = self.complex_dim as i32;
                let psi = add(&offsets[i], phi);
                let m = grid.density(a, &psi);
                let m0 = grid.density(a, &offsets[i]);
                let a_psi = grid.tangential_ratio(a, &psi);
                let a_theta = grid.tangential_ratio(a, &offsets[i]);
                (0..self.num_nodes())
                    .map(|p| {
                        let b_psi = m[p] / a_psi[p].powi(n - 1);
                        let b_theta = m0[p] / a_theta[p].powi(n - 1);
                        (n - 1) as f64 * a_psi[p] / a_theta[p] + b_psi / b_theta
                    })
                    .collect()
            }
            _ => panic!("background split does not match the geometry backend"),
        }
    }

    /// `tr_{omega_0} theta_i` at each node.
    pub fn theta_trace(&self, bg: &BackgroundSplit, i: usize) -> Vec<f64> {
        match (&self.backend, &bg.classes) {
            (Backend::Surface(_), Classes::Densities(f)) => f[i].clone(),
            (
                Backend::Radial(grid),
                Classes::Radial {
                    coefficients,
                    offsets,
                },
            ) => {
                let a = coefficients[i];
                let n = self.complex_dim as i32;
                let m0 = grid.density(a, &offsets[i]);
                let ratio = grid.tangential_ratio(a, &offsets[i]);
                m0.iter()
                    .zip(&ratio)
                    .map(|(m, r)| (n - 1) as f64 * r + m / r.powi(n - 1))
                    .collect()
            }
            _ => panic!("background split does not match the geometry backend"),
        }
    }

    /// Per-node share of `|dv|^2_{omega_0} dA`, summing to `-int v Delta v`.
    pub fn gradient_energy(&self, v: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Surface(mesh) => surface::gradient_energy(mesh, v),
            Backend::Radial(grid) => grid.gradient_energy(v),
        }
    }

    /// Estimate of `sup_x int G^+(x, .) dA` for the positive Green's function.
    /// Exact when `samples >= N`.
    pub fn green_constant(&self, samples: usize) -> Result<f64> {
        green::green_constant(self, samples)
    }

    /// Deterministic nested node ordering by farthest-point sampling from node 0.
    pub fn sample_order(&self, count: usize) -> Vec<usize> {
        green::farthest_point_order(&self.positions(), count)
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Reads and validates an OFF mesh.
pub fn load_off_mesh(path: impl AsRef<std::path::Path>) -> Result<TriangleMesh> {
    TriangleMesh::load_off(path)
}

/// Cotangent Laplacian with barycentric areas; the mesh metric is `omega_0`.
pub fn build_surface_geometry(mesh: TriangleMesh) -> Result<DiscreteGeometry> {
    let (stiffness, areas) = surface::cotangent_stiffness(&mesh)?;
    if let Some(p) = areas.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::DegenerateGeometry(format!(
            "vertex {p} has zero area"
        )));
    }
    let inv: Vec<f64> = areas.iter().map(|a| 1.0 / a).collect();
    let laplacian = stiffness.scale_rows(&inv);
    let volume = areas.iter().sum();
    Ok(DiscreteGeometry {
        backend: Backend::Surface(mesh),
        complex_dim: 1,
        weights: areas,
        volume,
        laplacian,
    })
}

/// Radial model of `(P^n, omega_FS)` with classes `a_i [omega_FS]`.
///
/// Requires `sum a_i = n + 1` so that `Ric(omega_FS) = sum theta_i`, hence the
/// returned split has the Fano sign and `C_i = a_i^n`.
pub fn build_radial_geometry(
    n: usize,
    grid_size: usize,
    a: &[f64],
) -> Result<(DiscreteGeometry, BackgroundSplit)> {
    if n < 1 {
        return Err(Error::InvalidInput(
            "complex dimension must be at least 1".into(),
        ));
    }
    if grid_size < 16 {
        return Err(Error::InvalidInput(format!(
            "grid_size {grid_size} is below the minimum of 16"
        )));
    }
    if a.is_empty() {
        return Err(Error::BadSplitting("need at least one class".into()));
    }
    if let Some(bad) = a.iter().find(|&&ai| !(ai > 0.0)) {
        return Err(Error::BadSplitting(format!(
            "coefficient {bad} is not positive"
        )));
    }
    let sum: f64 = a.iter().sum();
    if (sum - (n + 1) as f64).abs() > 1e-12 {
        return Err(Error::BadSplitting(format!(
            "coefficients sum to {sum}, expected n + 1 = {}",
            n + 1
        )));
    }
    let grid = RadialGrid::new(n, grid_size);
    let weights = grid.weights();
    let volume = weights.iter().sum();
    let laplacian = grid.laplacian();
    let geom = DiscreteGeometry {
        backend: Backend::Radial(grid),
        complex_dim: n,
        weights,
        volume,
        laplacian,
    };
    let split = BackgroundSplit {
        sign: Sign::Fano,
        constants: a.iter().map(|ai| ai.powi(n as i32)).collect(),
        classes: Classes::Radial {
            coefficients: a.to_vec(),
            offsets: vec![vec![0.0; grid_size]; a.len()],
        },
    };
    Ok((geom, split))
}
