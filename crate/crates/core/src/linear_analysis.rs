//! Linearized operator at a solution, its low spectrum, and verification
//! probes for uniqueness and the Weitzenbock inequality.
//!
//! The openness operator acts on `k` node vectors as
//!
//! ```text
//! (L v)_i = -Delta_{omega_i} v_i + sigma * sum_j t_j v_j
//! ```
//!
//! where `Delta_{omega_i} = Dm_i / m_i` is the Laplacian of the solved metric
//! `omega_i = theta_i + i ddbar phi_i`. Its eigenvalues are taken on the
//! subspace where each `v_i` has zero mean against `dvol_i = m_i dA`.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continuity::{newton_solve, PathConfig};
use crate::error::{Error, Result};
use crate::geometry::{Backend, BackgroundSplit, DiscreteGeometry};
use crate::linalg::{BorderedMatrix, SparseMatrix};
use crate::system::{evaluate, normalize_gauge, CoupledState};

/// Residual above which a state is not treated as a solution, relative to `max_i C_i`.
const SOLUTION_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;
const EIGEN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OpennessOperator {
    k: usize,
    n: usize,
    params: Vec<f64>,
    sigma: f64,
    densities: Vec<Vec<f64>>,
    dvol: Vec<Vec<f64>>,
    matrix: SparseMatrix,
}

impl OpennessOperator {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `m_i dA` at each node.
    pub fn dvol(&self, i: usize) -> &[f64] {
        &self.dvol[i]
    }

    /// Monge-Ampere densities `m_i` of the solved metrics.
    pub fn density(&self, i: usize) -> &[f64] {
        &self.densities[i]
    }

    /// Stacked `kN x kN` matrix.
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let y = self.matrix.mul_vec(&v.concat());
        (0..self.k)
            .map(|i| y[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

/// Assembles `L` at a converged state.
pub fn assemble_l(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
) -> Result<OpennessOperator> {
    let eval = evaluate(geom, bg, state);
    let tolerance = SOLUTION_TOLERANCE * bg.max_constant();
    if !(eval.residual.sup <= tolerance) || !eval.admissible() {
        return Err(Error::NotASolution {
            residual: eval.residual.sup,
            tolerance,
        });
    }
    let n = state.num_nodes();
    let k = state.k();
    let sigma = state.sign().sigma();
    let mut triplets = Vec::new();
    for i in 0..k {
        let inv: Vec<f64> = eval.densities[i].iter().map(|m| -1.0 / m).collect();
        let block = geom.ma_linearization(bg, i, state.phi(i)).scale_rows(&inv);
        triplets.extend(block.triplets().map(|(r, c, v)| (i * n + r, i * n + c, v)));
        for (j, &t) in state.params().iter().enumerate() {
            if t != 0.0 {
                triplets.extend((0..n).map(|p| (i * n + p, j * n + p, sigma * t)));
            }
        }
    }
    let dvol = eval
        .densities
        .iter()
        .map(|m| m.iter().zip(geom.weights()).map(|(a, w)| a * w).collect())
        .collect();
    Ok(OpennessOperator {
        k,
        n,
        params: state.params().to_vec(),
        sigma,
        densities: eval.densities,
        dvol,
        matrix: SparseMatrix::from_triplets(k * n, k * n, &triplets),
    })
}

/// Smallest-magnitude eigenvalue of `L` on the `dvol_i`-mean-zero subspace
/// and its eigenvector (one node vector per equation).
pub fn smallest_eigenvalue(op: &OpennessOperator) -> Result<(f64, Vec<Vec<f64>>)> {
    let pairs = restricted_eigenpairs(&op.matrix, &op.dvol, 1)?;
    let (value, v) = pairs.into_iter().next().expect("one pair requested");
    let n = op.n;
    Ok((
        value,
        (0..op.k).map(|i| v[i * n..(i + 1) * n].to_vec()).collect(),
    ))
}

/// Eigenvalue residual `||P L v - value v|| / ||v||` in the symmetrizing weight,
/// where `P` removes the `dvol_i`-mean of each slot.
pub fn eigen_residual(op: &OpennessOperator, value: f64, v: &[Vec<f64>]) -> f64 {
    let weights = inner_weights(&op.dvol);
    let mut r = op.matrix.mul_vec(&v.concat());
    project(&mut r, &op.dvol);
    let flat = v.concat();
    for (ri, vi) in r.iter_mut().zip(&flat) {
        *ri -= value * vi;
    }
    weighted_norm(&r, &weights) / weighted_norm(&flat, &weights)
}

/// First nonzero eigenvalue of `-Delta_{omega_i}` for the solved metric.
pub fn metric_laplacian_gap(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    i: usize,
) -> Result<f64> {
    let m = geom.ma_density(bg, i, state.phi(i));
    let inv: Vec<f64> = m.iter().map(|v| -1.0 / v).collect();
    let matrix = geom.ma_linearization(bg, i, state.phi(i)).scale_rows(&inv);
    let dvol: Vec<f64> = m.iter().zip(geom.weights()).map(|(a, w)| a * w).collect();
    Ok(restricted_eigenpairs(&matrix, &[dvol], 1)?[0].0)
}

/// Lowest `count` nonzero eigenpairs of `-Delta_0`, eigenvectors normalized to
/// unit `L^2(dA)` norm, in increasing order.
pub fn laplacian_low_modes(geom: &DiscreteGeometry, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let neg = geom.laplacian().scale_rows(&vec![-1.0; geom.num_nodes()]);
    let mut pairs = restricted_eigenpairs(&neg, &[geom.weights().to_vec()], count)?;
    for (_, v) in &mut pairs {
        let norm = weighted_norm(v, geom.weights());
        v.iter_mut().for_each(|x| *x /= norm);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs)
}

/// Per-slot weights `dvol_i / mean(m_i)`. At a solution these coincide for
/// all slots, which makes the restricted operator self-adjoint.
fn inner_weights(dvol: &[Vec<f64>]) -> Vec<f64> {
    dvol.iter()
        .flat_map(|w| {
            let total: f64 = w.iter().sum();
            let n = w.len() as f64;
            w.iter().map(move |x| x * n / total)
        })
        .collect()
}

/// Removes the `dvol`-weighted mean from each slot.
fn project(v: &mut [f64], dvol: &[Vec<f64>]) {
    let n = dvol[0].len();
    for (i, w) in dvol.iter().enumerate() {
        let slot = &mut v[i * n..(i + 1) * n];
        let mean = slot.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        slot.iter_mut().for_each(|x| *x -= mean);
    }
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    crate::linalg::weighted_dot(a, b, w)
}

fn weighted_norm(a: &[f64], w: &[f64]) -> f64 {
    weighted_dot(a, a, w).sqrt()
}

/// Block inverse iteration with Rayleigh-Ritz extraction on the subspace of
/// slot-wise mean-zero vectors. Returns the `count` eigenpairs of smallest
/// magnitude.
fn restricted_eigenpairs(
    matrix: &SparseMatrix,
    dvol: &[Vec<f64>],
    count: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let slots = dvol.len();
    let n = dvol[0].len();
    let dim = slots * n;
    assert_eq!(matrix.nrows(), dim);
    let block = (count + 6).min(dim - slots);
    assert!(
        count <= block,
        "requested more eigenpairs than the subspace holds"
    );

    let mut columns = Vec::with_capacity(slots);
    let mut rows = Vec::with_capacity(slots);
    for (i, w) in dvol.iter().enumerate() {
        let total: f64 = w.iter().sum();
        let mut col = vec![0.0; dim];
        col[i * n..(i + 1) * n].fill(1.0);
        let mut row = vec![0.0; dim];
        for (r, x) in row[i * n..(i + 1) * n].iter_mut().zip(w) {
            *r = x / total;
        }
        columns.push(col);
        rows.push(row);
    }
    let lu = BorderedMatrix::new(matrix.clone(), columns, rows).factor()?;
    let weights = inner_weights(dvol);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
            project(&mut v, dvol);
            v
        })
        .collect();
    orthonormalize(&mut basis, &weights)?;

    for _ in 0..MAX_ITERATIONS {
        let mut next = Vec::with_capacity(block);
        for x in &basis {
            let mut rhs = x.clone();
            rhs.resize(dim + slots, 0.0);
            let mut y = lu.solve(&rhs)?;
            y.truncate(dim);
            project(&mut y, dvol);
            next.push(y);
        }
        orthonormalize(&mut next, &weights)?;
        basis = next;

        let images: Vec<Vec<f64>> = basis
            .iter()
            .map(|x| {
                let mut y = matrix.mul_vec(x);
                project(&mut y, dvol);
                y
            })
            .collect();
        let h = DMatrix::from_fn(block, block, |r, c| {
            weighted_dot(&basis[r], &images[c], &weights)
        });
        let Some(mut ritz) = ritz_pairs(&h) else {
            continue;
        };
        ritz.sort_by(|a, b| a.0.norm().total_cmp(&b.0.norm()));

        let mut found = Vec::with_capacity(count);
        for (lambda, y) in ritz.iter().take(count) {
            if lambda.im.abs() > 1e-10 * lambda.norm().max(1.0) {
                break;
            }
            let y = y.clone().unwrap_or_else(|| null_vector(&h, lambda.re));
            let mut v = vec![0.0; dim];
            let mut lv = vec![0.0; dim];
            for (c, &yc) in y.iter().enumerate() {
                for p in 0..dim {
                    v[p] += yc * basis[c][p];
                    lv[p] += yc * images[c][p];
                }
            }
            let r: Vec<f64> = lv.iter().zip(&v).map(|(a, b)| a - lambda.re * b).collect();
            if weighted_norm(&r, &weights) > EIGEN_TOLERANCE * weighted_norm(&v, &weights) {
                break;
            }
            found.push((lambda.re, v));
        }
        if found.len() == count {
            return Ok(found);
        }
    }
    Err(Error::IterationFailure(MAX_ITERATIONS))
}

fn orthonormalize(vs: &mut [Vec<f64>], w: &[f64]) -> Result<()> {
    for i in 0..vs.len() {
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for j in 0..i {
                let c = weighted_dot(&vs[i], &vs[j], w);
                let (head, tail) = vs.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= c * b;
                }
            }
        }
        let norm = weighted_norm(&vs[i], w);
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::SolveFailure("eigen basis collapsed".into()));
        }
        vs[i].iter_mut().for_each(|x| *x /= norm);
    }
    Ok(())
}

type RitzPair = (Complex<f64>, Option<DVector<f64>>);

/// Eigenvalues of the small projected matrix, with eigenvectors when it is
/// symmetric. `None` if the Schur iteration does not settle.
fn ritz_pairs(h: &DMatrix<f64>) -> Option<Vec<RitzPair>> {
    let asym = (h - h.transpose()).norm();
    if asym <= 1e-10 * h.norm() {
        let eig = ((h + h.transpose()) * 0.5).symmetric_eigen();
        let pairs = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(c, &x)| {
                (
                    Complex::new(x, 0.0),
                    Some(eig.eigenvectors.column(c).into_owned()),
                )
            })
            .collect();
        return Some(pairs);
    }
    let schur = Schur::try_new(h.clone(), 1e-14, 10_000)?;
    Some(
        schur
            .complex_eigenvalues()
            .iter()
            .map(|&z| (z, None))
            .collect(),
    )
}

fn null_vector(h: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let m = h - DMatrix::identity(h.nrows(), h.ncols()) * lambda;
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let idx = svd.singular_values.argmin().0;
    v_t.row(idx).transpose()
}

/// Outcome of one perturb-and-resolve trial.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessOutcome {
    pub seed: u64,
    pub distance: f64,
    pub pass: bool,
    /// Solver failure, if Newton did not reconverge.
    pub failure: Option<String>,
}

/// Perturbs every potential by a smooth random field of sup norm `magnitude`,
/// reruns Newton, and measures the sup distance to the original solution
/// after gauge alignment.
pub fn uniqueness_probe(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    magnitude: f64,
    seed: u64,
    cfg: &PathConfig,
) -> UniquenessOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phis = state
        .phis()
        .iter()
        .map(|phi| {
            let field = smooth_random_field(geom, &mut rng);
            let sup = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if sup > 0.0 { magnitude / sup } else { 0.0 };
            phi.iter().zip(&field).map(|(p, f)| p + scale * f).collect()
        })
        .collect();
    let perturbed = normalize_gauge(geom, &state.with_phis(phis));
    let reference = normalize_gauge(geom, state);
    match newton_solve(geom, bg, &perturbed, cfg) {
        Ok((solved, _)) => {
            let distance = solved
                .phis()
                .iter()
                .flatten()
                .zip(reference.phis().iter().flatten())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            UniquenessOutcome {
                seed,
                distance,
                pass: distance <= 1e-7,
                failure: None,
            }
        }
        Err(e) => UniquenessOutcome {
            seed,
            distance: f64::INFINITY,
            pass: false,
            failure: Some(e.to_string()),
        },
    }
}

/// Sum of a few low-frequency modes with random amplitudes and phases.
fn smooth_random_field(geom: &DiscreteGeometry, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let positions = geom.positions();
    let mut field = vec![0.0; positions.len()];
    match geom.backend() {
        Backend::Surface(_) => {
            for _ in 0..4 {
                let d: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0);
                let freq = 1.0 + 2.0 * rng.random::<f64>();
                let phase = std::f64::consts::TAU * rng.random::<f64>();
                let amp = rng.random::<f64>() * 2.0 - 1.0;
                for (f, p) in field.iter_mut().zip(&positions) {
                    *f += amp * (freq * (d[0] * p[0] + d[1] * p[1] + d[2] * p[2]) + phase).sin();
                }
            }
        }
        Backend::Radial(_) => {
            for m in 1..=4 {
                let amp = rng.random::<f64>() * 2.0 - 1.0;
                for (f, p) in field.iter_mut().zip(&positions) {
                    *f += amp * (m as f64 * std::f64::consts::PI * p[0]).cos();
                }
            }
        }
    }
    field
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeitzenbockMargin {
    pub equation: usize,
    pub sample: usize,
    /// Eigenvalue of `-Delta_0` for the test function.
    pub mode_eigenvalue: f64,
    /// `int (Delta_{omega_i} v)^2 dvol_i`.
    pub lhs: f64,
    /// `int rho_i |dv|^2_{omega_i} dvol_i`.
    pub rhs: f64,
    pub margin: f64,
}

/// `(lhs, rhs)` of the Weitzenbock inequality for equation `i` and test
/// function `v`, in complex dimension one. The Ricci density relative to
/// `omega_i` is read off the path equation:
/// `rho_i = -sigma * sum_j (t_j m_j + (1 - t_j) tr theta_j) / m_i`.
pub fn weitzenbock_terms(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    i: usize,
    v: &[f64],
) -> Result<(f64, f64)> {
    if geom.complex_dim() != 1 {
        return Err(Error::UnsupportedBackend(
            "the Weitzenbock check needs complex dimension one".into(),
        ));
    }
    let n = geom.num_nodes();
    let sigma = state.sign().sigma();
    let densities: Vec<Vec<f64>> = (0..state.k())
        .map(|j| geom.ma_density(bg, j, state.phi(j)))
        .collect();
    let mut ricci = vec![0.0; n];
    for (j, &t) in state.params().iter().enumerate() {
        let tr = geom.theta_trace(bg, j);
        for p in 0..n {
            ricci[p] += t * densities[j][p] + (1.0 - t) * tr[p];
        }
    }
    let m = &densities[i];
    let lap = geom.apply_laplacian(v);
    // in dimension one |dv|^2_omega dvol is conformally invariant
    let energy = geom.gradient_energy(v);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for p in 0..n {
        lhs += lap[p] * lap[p] / m[p] * geom.weights()[p];
        rhs += -sigma * ricci[p] / m[p] * energy[p];
    }
    Ok((lhs, rhs))
}

/// Margins for the lowest `num_samples` modes of `-Delta_0` against every
/// equation.
pub fn weitzenbock_check(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    num_samples: usize,
) -> Result<Vec<WeitzenbockMargin>> {
    if geom.complex_dim() != 1 {
        return Err(Error::UnsupportedBackend(
            "the Weitzenbock check needs complex dimension one".into(),
        ));
    }
    let modes = laplacian_low_modes(geom, num_samples)?;
    let mut out = Vec::with_capacity(num_samples * state.k());
    for i in 0..state.k() {
        for (s, (eig, v)) in modes.iter().enumerate() {
            let (lhs, rhs) = weitzenbock_terms(geom, bg, state, i, v)?;
            out.push(WeitzenbockMargin {
                equation: i,
                sample: s,
                mode_eigenvalue: *eig,
                lhs,
                rhs,
                margin: lhs - rhs,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_radial_geometry, build_surface_geometry, Sign, TriangleMesh};

    #[test]
    fn decoupled_at_zero_and_aligned_constants() {
        let (g, bg) = build_radial_geometry(1, 64, &[1.0, 1.0]).unwrap();
        let s = CoupledState::zeros(&g, &bg, 0.0);
        let op = assemble_l(&g, &bg, &s).unwrap();
        let v = vec![
            g.positions()
                .iter()
                .map(|p| p[0] * p[0])
                .collect::<Vec<_>>(),
            vec![0.0; 64],
        ];
        let lv = op.apply(&v);
        let lap = g.apply_laplacian(&v[0]);
        for p in 0..64 {
            assert!((lv[0][p] + lap[p]).abs() < 1e-12 * lap[p].abs().max(1.0));
            assert_eq!(lv[1][p], 0.0);
        }
        let op = assemble_l(&g, &bg, &s.at_parameter(0.6)).unwrap();
        let lc = op.apply(&[vec![0.7; 64], vec![-0.7; 64]]);
        assert!(lc.iter().flatten().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn rejects_non_solutions() {
        let g = build_surface_geometry(TriangleMesh::icosphere(1)).unwrap();
        let f: Vec<Vec<f64>> = (0..2)
            .map(|i| g.positions().iter().map(|p| 1.0 + 0.3 * p[i]).collect())
            .collect();
        let bg = BackgroundSplit::from_densities(&g, f, Sign::AntiFano).unwrap();
        let s = CoupledState::zeros(&g, &bg, 0.5);
        assert!(matches!(
            assemble_l(&g, &bg, &s),
            Err(Error::NotASolution { .. })
        ));
    }

    #[test]
    fn symmetric_p1_spectrum() {
        let (g, bg) = build_radial_geometry(1, 128, &[1.0, 1.0]).unwrap();
        let gap0 = metric_laplacian_gap(&g, &bg, &CoupledState::zeros(&g, &bg, 0.0), 0).unwrap();
        assert!((gap0 - 2.0).abs() < 1e-3, "{gap0}");
        for t in [0.0, 0.5, 0.9] {
            let s = CoupledState::zeros(&g, &bg, t);
            let op = assemble_l(&g, &bg, &s).unwrap();
            let (value, v) = smallest_eigenvalue(&op).unwrap();
            // aligned mode: -Delta w - 2t w
            assert!((value - (gap0 - 2.0 * t)).abs() < 1e-8, "t={t}: {value}");
            assert!(eigen_residual(&op, value, &v) <= 1e-8);
        }
    }

    #[test]
    fn sphere_low_modes() {
        let g = build_surface_geometry(TriangleMesh::icosphere(3)).unwrap();
        let modes = laplacian_low_modes(&g, 4).unwrap();
        // first eigenvalue of the half Laplace-Beltrami operator on the unit sphere is 1,
        // with multiplicity 3; the next is 3
        for (val, v) in &modes[..3] {
            assert!((val - 1.0).abs() < 0.01, "{val}");
            assert!((crate::linalg::weighted_dot(v, v, g.weights()) - 1.0).abs() < 1e-12);
        }
        assert!((modes[3].0 - 3.0).abs() < 0.05, "{}", modes[3].0);
    }

    #[test]
    fn weitzenbock_constant_and_dimension() {
        let (g, bg) = build_radial_geometry(1, 64, &[1.0, 1.0]).unwrap();
        let s = CoupledState::zeros(&g, &bg, 0.5);
        let (l, r) = weitzenbock_terms(&g, &bg, &s, 0, &vec![1.0; 64]).unwrap();
        assert_eq!(l - r, 0.0);
        let (g2, bg2) = build_radial_geometry(2, 32, &[1.5, 1.5]).unwrap();
        let s2 = CoupledState::zeros(&g2, &bg2, 0.5);
        assert!(matches!(
            weitzenbock_check(&g2, &bg2, &s2, 2),
            Err(Error::UnsupportedBackend(_))
        ));
    }

    #[test]
    fn zero_magnitude_probe_is_exact() {
        let (g, bg) = build_radial_geometry(1, 64, &[1.2, 0.8]).unwrap();
        let s = CoupledState::zeros(&g, &bg, 0.0);
        let cfg = PathConfig::default();
        let (s, _) = newton_solve(&g, &bg, &s, &cfg).unwrap();
        let out = uniqueness_probe(&g, &bg, &s, 0.0, 3, &cfg);
        assert!(out.pass && out.distance <= 1e-15, "{out:?}");
    }
}
