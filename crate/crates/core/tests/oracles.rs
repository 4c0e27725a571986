mod common;

use cke::continuity::{newton_solve, PathConfig};
use cke::geometry::{BackgroundSplit, Sign};
use cke::{build_radial_geometry, build_surface_geometry, CoupledState, TriangleMesh};
use common::*;

/// `det(d^2 Psi / dz_j dzbar_k)` on C^2 by central differences in real coordinates.
fn complex_hessian_det(psi: &dyn Fn([f64; 4]) -> f64, u: [f64; 4]) -> f64 {
    let h = 1e-4;
    let second = |a: usize, b: usize| {
        let at = |sa: f64, sb: f64| {
            let mut v = u;
            v[a] += sa * h;
            v[b] += sb * h;
            psi(v)
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
    };
    // coordinates (x1, y1, x2, y2); d_z d_zbar = (d_xx + d_yy + i (d_xy' - d_yx')) / 4
    let entry = |j: usize, k: usize| {
        let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
        let re = 0.25 * (second(xj, xk) + second(yj, yk));
        let im = 0.25 * (second(xj, yk) - second(yj, xk));
        (re, im)
    };
    let (h11, _) = entry(0, 0);
    let (h22, _) = entry(1, 1);
    let (re, im) = entry(0, 1);
    h11 * h22 - re * re - im * im
}

fn radial_potential(a: f64, phi: &dyn Fn(f64) -> f64) -> impl Fn([f64; 4]) -> f64 + '_ {
    move |v| {
        let r: f64 = v.iter().map(|c| c * c).sum();
        a * (1.0 + r).ln() + phi(r / (1.0 + r))
    }
}

fn density_oracle(a: f64, phi: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let r = x / (1.0 - x);
    let (s, c) = (r.sqrt() * 0.3f64.cos(), r.sqrt() * 0.3f64.sin());
    let u = [
        s * 0.7f64.cos(),
        s * 0.7f64.sin(),
        c * (-0.2f64).cos(),
        c * (-0.2f64).sin(),
    ];
    let zero = |_: f64| 0.0;
    let ratio = complex_hessian_det(&radial_potential(a, phi), u)
        / complex_hessian_det(&radial_potential(1.0, &zero), u);
    ratio
}

#[test]
fn radial_density_matches_brute_force_hessian_in_dimension_two() {
    let phi = |x: f64| 0.1 * (std::f64::consts::PI * x).sin() + 0.05 * x.powi(3);
    let a = 1.5;
    let mut errors = Vec::new();
    for size in [257, 513] {
        let (g, bg) = build_radial_geometry(2, size, &[a, a]).unwrap();
        let x: Vec<f64> = g.positions().iter().map(|p| p[0]).collect();
        let values: Vec<f64> = x.iter().map(|&x| phi(x)).collect();
        let m = g.ma_density(&bg, 0, &values);
        let mut worst = 0.0f64;
        for (p, &xp) in x.iter().enumerate() {
            if (0.1..=0.9).contains(&xp) {
                worst = worst.max((m[p] - density_oracle(a, &phi, xp)).abs());
            }
        }
        errors.push(worst);
    }
    assert!(errors[0] < 1e-4, "{errors:?}");
    assert!(errors[0] / errors[1] > 3.0, "{errors:?}");
}

#[test]
fn radial_offsets_match_brute_force_hessian() {
    let g_off = |x: f64| 0.2 * x * x;
    let phi = |x: f64| -0.05 * x;
    let (g, bg) = build_radial_geometry(2, 513, &[1.5, 1.5]).unwrap();
    let x: Vec<f64> = g.positions().iter().map(|p| p[0]).collect();
    let offsets = vec![x.iter().map(|&x| g_off(x)).collect(), vec![0.0; x.len()]];
    let bg = bg.with_potential_offsets(&g, offsets).unwrap();
    let m = g.ma_density(&bg, 0, &x.iter().map(|&x| phi(x)).collect::<Vec<_>>());
    let total = |x: f64| g_off(x) + phi(x);
    for (p, &xp) in x.iter().enumerate() {
        if (0.1..=0.9).contains(&xp) {
            assert!(
                (m[p] - density_oracle(1.5, &total, xp)).abs() < 1e-4,
                "x = {xp}"
            );
        }
    }
}

#[test]
fn quadrature_integrates_harmonics() {
    let q = sphere_quadrature(12);
    let area: f64 = q.iter().map(|(_, w)| w).sum();
    assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    let z2: f64 = q.iter().map(|(p, w)| w * p[2] * p[2]).sum();
    assert!((z2 - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
    let xy: f64 = q.iter().map(|(p, w)| w * p[0] * p[1]).sum();
    assert!(xy.abs() < 1e-14);
}

#[test]
fn mesh_laplacian_converges_weakly_on_harmonics() {
    // (1/2) Laplace-Beltrami of a degree-two harmonic is -3 times itself.
    // The cotan operator converges in the weak sense only, so compare
    // the Rayleigh quotient instead of nodal values.
    let mut errors = Vec::new();
    for s in [3, 4] {
        let g = build_surface_geometry(TriangleMesh::icosphere(s)).unwrap();
        let v: Vec<f64> = g.positions().iter().map(|p| p[0] * p[1]).collect();
        let lap = g.apply_laplacian(&v);
        let w = g.weights();
        let num: f64 = (0..v.len()).map(|p| w[p] * v[p] * lap[p]).sum();
        let den: f64 = (0..v.len()).map(|p| w[p] * v[p] * v[p]).sum();
        errors.push((num / den + 3.0).abs());
    }
    assert!(errors[1] < 0.01, "{errors:?}");
    assert!(errors[0] / errors[1] > 3.0, "{errors:?}");
}

#[test]
fn continuum_manufactured_solution_converges_on_the_mesh() {
    let cfg = PathConfig::default();
    for sign in [Sign::Fano, Sign::AntiFano] {
        let m = SphereManufactured::new(sign, 0.7, [0.4, 0.4]);
        let errors: Vec<f64> = [2, 3]
            .iter()
            .map(|&s| {
                let g = build_surface_geometry(TriangleMesh::icosphere(s)).unwrap();
                let bg = m.background(&g);
                let (sol, _) =
                    newton_solve(&g, &bg, &CoupledState::zeros(&g, &bg, 0.7), &cfg).unwrap();
                sup_distance(&sol, &m.exact_state(&g))
            })
            .collect();
        assert!(errors[0] / errors[1] > 3.0, "{sign:?}: {errors:?}");
    }
}

#[test]
fn radial_and_mesh_backgrounds_share_constants() {
    // theta_i = a_i omega_FS + i ddbar g_i integrates to a_i times half the sphere area
    let a = [1.2, 0.8];
    let g = build_surface_geometry(TriangleMesh::icosphere(4)).unwrap();
    let f: Vec<Vec<f64>> = (0..2)
        .map(|i| {
            g.positions()
                .iter()
                .map(|p| symmetric_offset_density(a[i], i, p[2]))
                .collect()
        })
        .collect();
    let bg = BackgroundSplit::from_densities(&g, f, Sign::Fano).unwrap();
    for i in 0..2 {
        assert!(
            (bg.constants()[i] - a[i] / 2.0).abs() < 1e-3,
            "{:?}",
            bg.constants()
        );
    }
}
