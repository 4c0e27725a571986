mod common;

use cke::cli_io::output::{parse_solution, solution_dump};
use cke::continuity::{newton_solve, PathConfig};
use cke::geometry::{BackgroundSplit, DiscreteGeometry, Sign};
use cke::linear_analysis::{assemble_l, eigen_residual, smallest_eigenvalue};
use cke::system::{exponent, gauge_shift, residual};
use cke::{build_radial_geometry, build_surface_geometry, CoupledState, TriangleMesh};
use common::*;
use proptest::prelude::*;

fn sphere() -> DiscreteGeometry {
    build_surface_geometry(TriangleMesh::icosphere(2)).unwrap()
}

/// Positive densities built from low-degree harmonics of the vertex positions.
fn densities(geom: &DiscreteGeometry, coeffs: &[[f64; 3]]) -> Vec<Vec<f64>> {
    coeffs
        .iter()
        .map(|c| {
            geom.positions()
                .iter()
                .map(|p| 1.0 + c[0] * p[2] + c[1] * p[0] * p[1] + c[2] * p[0])
                .collect()
        })
        .collect()
}

fn potentials(geom: &DiscreteGeometry, coeffs: &[[f64; 3]]) -> Vec<Vec<f64>> {
    coeffs
        .iter()
        .map(|c| {
            geom.positions()
                .iter()
                .map(|p| c[0] * p[0] + c[1] * p[2] * p[2] + c[2] * (3.0 * p[1]).sin())
                .collect()
        })
        .collect()
}

fn sign_strategy() -> impl Strategy<Value = Sign> {
    prop_oneof![Just(Sign::Fano), Just(Sign::AntiFano)]
}

fn coeffs(k: usize, scale: f64) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-scale..scale), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn admissible_shifts_leave_the_residual_unchanged(
        sign in sign_strategy(),
        t in prop::collection::vec(0.05f64..1.0, 3),
        f in coeffs(3, 0.3),
        phi in coeffs(3, 0.5),
        c in prop::array::uniform2(-2.0f64..2.0),
    ) {
        let g = sphere();
        let bg = BackgroundSplit::from_densities(&g, densities(&g, &f), sign).unwrap();
        let state = CoupledState::with_parameters(t.clone(), potentials(&g, &phi), sign).unwrap();
        let shift = [c[0], c[1], -(t[0] * c[0] + t[1] * c[1]) / t[2]];
        let shifted = gauge_shift(&state, &shift).unwrap();
        let a = residual(&g, &bg, &state);
        let b = residual(&g, &bg, &shifted);
        let sup = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a.as_slice().iter().zip(b.as_slice()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(diff <= 1e-12 * (1.0 + sup), "diff {diff:e}, sup {sup:e}");
    }

    #[test]
    fn mesh_residual_integrates_to_the_class_defect(
        sign in sign_strategy(),
        t in 0.0f64..1.0,
        f in coeffs(2, 0.3),
        phi in coeffs(2, 0.5),
    ) {
        let g = sphere();
        let fs = densities(&g, &f);
        let bg = BackgroundSplit::from_densities(&g, fs.clone(), sign).unwrap();
        let state = CoupledState::new(t, potentials(&g, &phi), sign);
        let r = residual(&g, &bg, &state);
        let e: Vec<f64> = exponent(&state).iter().map(|v| v.exp()).collect();
        for i in 0..2 {
            let expected = g.integrate(&fs[i]) - bg.constants()[i] * g.integrate(&e);
            let got = g.integrate(r.component(i));
            prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "{got} vs {expected}");
        }
    }

    #[test]
    fn mesh_density_preserves_the_class(f in coeffs(1, 0.3), phi in coeffs(1, 0.5)) {
        let g = sphere();
        let fs = densities(&g, &f);
        let bg = BackgroundSplit::from_densities(&g, fs.clone(), Sign::AntiFano).unwrap();
        let m = g.ma_density(&bg, 0, &potentials(&g, &phi)[0]);
        let (a, b) = (g.integrate(&m), g.integrate(&fs[0]));
        prop_assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }

    #[test]
    fn radial_trace_at_zero_is_the_dimension(n in 1usize..=3, size in 16usize..80, share in 0.1f64..0.9) {
        let a = share * (n + 1) as f64;
        let (g, bg) = build_radial_geometry(n, size, &[a, (n + 1) as f64 - a]).unwrap();
        for i in 0..2 {
            let tr = g.trace_wrt_theta(&bg, i, &vec![0.0; size]);
            prop_assert!(tr.iter().all(|v| (v - n as f64).abs() <= 1e-12), "{tr:?}");
        }
    }

    #[test]
    fn solution_dump_round_trips_exactly(
        t in 0.0f64..=1.0,
        sign in sign_strategy(),
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40),
    ) {
        let half = values.len() / 2;
        let phis = vec![values[..half].to_vec(), values[half..2 * half].to_vec()];
        let state = CoupledState::new(t, phis, sign);
        let back = parse_solution(&solution_dump(&state, 1)).unwrap();
        prop_assert_eq!(back.state, state);
        prop_assert_eq!(back.complex_dim, 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn green_constant_grows_with_samples(s in 1usize..40, extra in 1usize..40) {
        let g = sphere();
        let small = g.green_constant(s).unwrap();
        let large = g.green_constant(s + extra).unwrap();
        prop_assert!(small <= large, "{small} > {large}");
    }

    #[test]
    fn solutions_have_equal_normalized_volumes_and_accurate_eigenpairs(
        sign in sign_strategy(),
        t in 0.1f64..1.0,
        c in prop::array::uniform2(0.3f64..0.6),
    ) {
        let m = SphereManufactured::new(sign, t, c);
        let g = sphere();
        let bg = m.background(&g);
        let (sol, _) = newton_solve(&g, &bg, &m.exact_state(&g), &PathConfig::default()).unwrap();
        let op = assemble_l(&g, &bg, &sol).unwrap();
        let normalized: Vec<Vec<f64>> = (0..2)
            .map(|i| {
                let total: f64 = op.dvol(i).iter().sum();
                op.dvol(i).iter().map(|v| v / total).collect()
            })
            .collect();
        let gap = normalized[0].iter().zip(&normalized[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(gap <= 1e-8, "volume gap {gap:e}");
        let (value, v) = smallest_eigenvalue(&op).unwrap();
        let r = eigen_residual(&op, value, &v);
        prop_assert!(r <= 1e-8, "eigen residual {r:e}");
    }
}
