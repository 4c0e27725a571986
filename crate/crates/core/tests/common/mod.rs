//! Continuum oracles shared by the integration tests.
#![allow(dead_code)]

use cke::geometry::{BackgroundSplit, DiscreteGeometry, Sign};
use cke::system::normalize_gauge;
use cke::CoupledState;
use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Product rule on the unit sphere: Gauss-Legendre in `z`, uniform in longitude.
/// Exact for polynomials of degree below `n`.
pub fn sphere_quadrature(n: usize) -> Vec<([f64; 3], f64)> {
    let mut out = Vec::new();
    let m = 2 * n;
    for (z, w) in gauss_legendre(n) {
        let r = (1.0 - z * z).sqrt();
        for j in 0..m {
            let a = std::f64::consts::TAU * j as f64 / m as f64;
            out.push((
                [r * a.cos(), r * a.sin(), z],
                w * std::f64::consts::TAU / m as f64,
            ));
        }
    }
    out
}

/// Exact solution on the round unit sphere built from spherical harmonics,
/// with the mesh Laplacian convention `Delta = (1/2) Laplace-Beltrami`.
pub struct SphereManufactured {
    pub sign: Sign,
    pub t: f64,
    pub constants: [f64; 2],
    /// Constant added to the first potential so that the mean of
    /// `exp(sigma t sum phi)` over the sphere is one.
    pub shift: f64,
}

impl SphereManufactured {
    pub fn new(sign: Sign, t: f64, constants: [f64; 2]) -> Self {
        let mut s = Self {
            sign,
            t,
            constants,
            shift: 0.0,
        };
        let quad = sphere_quadrature(40);
        let sigma = sign.sigma();
        let mean: f64 = quad
            .iter()
            .map(|(p, w)| w * (sigma * t * (s.raw(0, p) + s.raw(1, p))).exp())
            .sum::<f64>()
            / (4.0 * std::f64::consts::PI);
        s.shift = -mean.ln() / (sigma * t);
        s
    }

    fn raw(&self, i: usize, p: &[f64; 3]) -> f64 {
        let [x, y, z] = *p;
        match i {
            0 => 0.1 * z + 0.05 * x * y,
            _ => 0.06 * (x * x - y * y),
        }
    }

    /// `(1/2) Laplace-Beltrami` of the potential; degree-l harmonics scale by `-l(l+1)/2`.
    fn laplacian(&self, i: usize, p: &[f64; 3]) -> f64 {
        let [x, y, z] = *p;
        match i {
            0 => -0.1 * z - 3.0 * 0.05 * x * y,
            _ => -3.0 * 0.06 * (x * x - y * y),
        }
    }

    pub fn potential(&self, i: usize, p: &[f64; 3]) -> f64 {
        self.raw(i, p) + if i == 0 { self.shift } else { 0.0 }
    }

    pub fn density(&self, i: usize, p: &[f64; 3]) -> f64 {
        let sum = self.potential(0, p) + self.potential(1, p);
        self.constants[i] * (self.sign.sigma() * self.t * sum).exp() - self.laplacian(i, p)
    }

    /// Continuum densities sampled at the mesh vertices.
    pub fn background(&self, geom: &DiscreteGeometry) -> BackgroundSplit {
        let pos = geom.positions();
        let f = (0..2)
            .map(|i| pos.iter().map(|p| self.density(i, p)).collect())
            .collect();
        BackgroundSplit::from_densities(geom, f, self.sign).unwrap()
    }

    /// Exact potentials at the vertices in the solver gauge.
    pub fn exact_state(&self, geom: &DiscreteGeometry) -> CoupledState {
        let pos = geom.positions();
        let phis = (0..2)
            .map(|i| pos.iter().map(|p| self.potential(i, p)).collect())
            .collect();
        normalize_gauge(geom, &CoupledState::new(self.t, phis, self.sign))
    }
}

pub fn sup_distance(a: &CoupledState, b: &CoupledState) -> f64 {
    a.phis()
        .iter()
        .flatten()
        .zip(b.phis().iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Radial offsets `g_1 = 0.15 x^2`, `g_2 = -0.15 x^3` and the matching
/// densities of `theta_i = a_i omega_FS + i ddbar g_i` against the area form
/// of the unit sphere, where `x = (1 + z) / 2`.
///
/// Since `g_1 + g_2` is not constant, `Ric(omega_FS) != sum theta_i` and the
/// system is the plain PDE problem for this data. With `a = (1.2, 0.8)` its
/// Fano path has a nondegenerate solution at `t = 1`; with `g_2 = -0.1 x^3`
/// it runs off to infinity as `t -> 1`.
pub fn symmetric_offset(i: usize, x: f64) -> f64 {
    if i == 0 {
        0.15 * x * x
    } else {
        -0.15 * x * x * x
    }
}

pub fn symmetric_offset_density(a: f64, i: usize, z: f64) -> f64 {
    let x = 0.5 * (1.0 + z);
    // (x (1 - x) g')' for each offset
    let lap = if i == 0 {
        0.3 * (2.0 * x - 3.0 * x * x)
    } else {
        -0.45 * (3.0 * x * x - 4.0 * x * x * x)
    };
    0.5 * (a + lap)
}

/// Piecewise-linear interpolation of nodal values on the uniform grid of [0, 1].
pub fn interpolate_uniform(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let s = (x.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-12);
    let j = s.floor() as usize;
    let f = s - j as f64;
    values[j] * (1.0 - f) + values[j + 1] * f
}
