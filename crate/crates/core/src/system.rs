//! Residual and Jacobian of the parametrized coupled system
//!
//! ```text
//! R_i = m_i[phi_i] - C_i exp(sigma * sum_j t_j phi_j)
//! ```
//!
//! and the additive-constant gauge. Shifts `phi_j -> phi_j + c_j` with
//! `sum_j t_j c_j = 0` leave the residual unchanged. Internally the solver
//! fixes them with mean-zero constraints on `phi_2..phi_k` (and on `phi_1`
//! when `t_1 = 0`, where every constant is a symmetry); the sup-normalized
//! gauge is produced only for reporting.

use crate::error::{Error, Result};
use crate::geometry::{BackgroundSplit, DiscreteGeometry, Sign};
use crate::linalg::{BorderedMatrix, SparseMatrix};

/// Path parameter(s) and the `k` potentials on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    t: f64,
    params: Vec<f64>,
    phis: Vec<Vec<f64>>,
    sign: Sign,
}

impl CoupledState {
    /// State on the scalar path, `t_i = t` for all `i`.
    pub fn new(t: f64, phis: Vec<Vec<f64>>, sign: Sign) -> Self {
        assert!(!phis.is_empty());
        let n = phis[0].len();
        assert!(
            phis.iter().all(|p| p.len() == n),
            "potentials differ in length"
        );
        Self {
            t,
            params: vec![t; phis.len()],
            phis,
            sign,
        }
    }

    /// State with per-equation parameters `t_i`. Requires `t_1 > 0` unless
    /// every `t_i` is zero; `t()` reports the largest `t_i`.
    pub fn with_parameters(params: Vec<f64>, phis: Vec<Vec<f64>>, sign: Sign) -> Result<Self> {
        if params.len() != phis.len() {
            return Err(Error::InvalidInput(format!(
                "{} parameters for {} potentials",
                params.len(),
                phis.len()
            )));
        }
        if params.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput("parameters must lie in [0, 1]".into()));
        }
        if params[0] == 0.0 && params.iter().any(|&t| t > 0.0) {
            return Err(Error::GaugeViolation(
                "t_1 = 0 with some t_j > 0 leaves phi_1 without a gauge; reorder the equations"
                    .into(),
            ));
        }
        let mut state = Self::new(0.0, phis, sign);
        state.t = params.iter().cloned().fold(0.0, f64::max);
        state.params = params;
        Ok(state)
    }

    pub fn zeros(geom: &DiscreteGeometry, bg: &BackgroundSplit, t: f64) -> Self {
        Self::new(t, vec![vec![0.0; geom.num_nodes()]; bg.k()], bg.sign())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_scalar_path(&self) -> bool {
        self.params.iter().all(|&p| p == self.t)
    }

    pub fn phis(&self) -> &[Vec<f64>] {
        &self.phis
    }

    pub fn phi(&self, i: usize) -> &[f64] {
        &self.phis[i]
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn k(&self) -> usize {
        self.phis.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.phis[0].len()
    }

    pub fn with_phis(&self, phis: Vec<Vec<f64>>) -> Self {
        assert_eq!(phis.len(), self.k());
        Self {
            phis,
            ..self.clone()
        }
    }

    /// Same potentials on the scalar path at parameter `t`.
    pub fn at_parameter(&self, t: f64) -> Self {
        Self::new(t, self.phis.clone(), self.sign)
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.phis.concat()
    }

    pub fn is_finite(&self) -> bool {
        self.phis.iter().flatten().all(|v| v.is_finite())
    }
}

/// Stacked residual `R_i(p)` with its sup and `dA`-weighted l2 norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    nodes: usize,
    values: Vec<f64>,
    pub sup: f64,
    pub l2: f64,
}

impl ResidualVector {
    fn new(values: Vec<f64>, nodes: usize, weights: &[f64]) -> Self {
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sup = if values.iter().all(|v| v.is_finite()) {
            sup
        } else {
            f64::INFINITY
        };
        let l2 = values
            .chunks(nodes)
            .map(|r| r.iter().zip(weights).map(|(v, w)| v * v * w).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        Self {
            nodes,
            values,
            sup,
            l2,
        }
    }

    pub fn k(&self) -> usize {
        self.values.len() / self.nodes
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.sup.is_finite() && self.l2.is_finite()
    }
}

/// Residual together with the pieces Newton and the monitors reuse.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub residual: ResidualVector,
    pub densities: Vec<Vec<f64>>,
    /// `exp(sigma * sum_j t_j phi_j)`.
    pub coupling: Vec<f64>,
}

impl Evaluation {
    pub fn admissible(&self) -> bool {
        self.residual.is_finite()
            && self.coupling.iter().all(|v| v.is_finite())
            && self.densities.iter().flatten().all(|&m| m > 0.0)
    }
}

/// `sigma * sum_j t_j phi_j` at each node.
pub fn exponent(state: &CoupledState) -> Vec<f64> {
    let sigma = state.sign.sigma();
    let mut e = vec![0.0; state.num_nodes()];
    for (phi, &t) in state.phis.iter().zip(&state.params) {
        if t != 0.0 {
            for (ep, p) in e.iter_mut().zip(phi) {
                *ep += t * p;
            }
        }
    }
    e.iter_mut().for_each(|v| *v *= sigma);
    e
}

pub(crate) fn evaluate(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
) -> Evaluation {
    check_shapes(geom, bg, state);
    let coupling: Vec<f64> = exponent(state).iter().map(|e| e.exp()).collect();
    let densities: Vec<Vec<f64>> = (0..state.k())
        .map(|i| geom.ma_density(bg, i, &state.phis[i]))
        .collect();
    let mut values = Vec::with_capacity(state.k() * state.num_nodes());
    for (m, &c) in densities.iter().zip(bg.constants()) {
        values.extend(m.iter().zip(&coupling).map(|(mi, e)| mi - c * e));
    }
    Evaluation {
        residual: ResidualVector::new(values, state.num_nodes(), geom.weights()),
        densities,
        coupling,
    }
}

fn check_shapes(geom: &DiscreteGeometry, bg: &BackgroundSplit, state: &CoupledState) {
    assert_eq!(
        state.k(),
        bg.k(),
        "state has {} potentials, split has {}",
        state.k(),
        bg.k()
    );
    assert_eq!(state.num_nodes(), geom.num_nodes());
}

pub fn residual(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
) -> ResidualVector {
    evaluate(geom, bg, state).residual
}

/// `(J delta)_i = Dm_i[phi_i] delta_i - sigma C_i e^{E} sum_j t_j delta_j`.
pub fn jacobian_apply(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    delta: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    check_shapes(geom, bg, state);
    assert_eq!(delta.len(), state.k());
    let sigma = state.sign.sigma();
    let coupling: Vec<f64> = exponent(state).iter().map(|e| e.exp()).collect();
    let mut combo = vec![0.0; state.num_nodes()];
    for (d, &t) in delta.iter().zip(&state.params) {
        for (c, v) in combo.iter_mut().zip(d) {
            *c += t * v;
        }
    }
    (0..state.k())
        .map(|i| {
            let dm = geom.ma_density_derivative(bg, i, &state.phis[i], &delta[i]);
            let ci = bg.constants()[i];
            dm.iter()
                .zip(&coupling)
                .zip(&combo)
                .map(|((d, e), s)| d - sigma * ci * e * s)
                .collect()
        })
        .collect()
}

/// Equations whose potential carries a mean-zero constraint.
pub fn pinned_slots(state: &CoupledState) -> Vec<usize> {
    let first = if state.params[0] == 0.0 { 0 } else { 1 };
    (first..state.k()).collect()
}

/// Explicit Jacobian bordered by the gauge constraints. Border columns are
/// slot-constant vectors; border rows are `dA/V` on the pinned slots.
pub fn assemble_jacobian(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
) -> BorderedMatrix {
    let eval = evaluate(geom, bg, state);
    assemble_from(geom, bg, state, &eval.coupling)
}

pub(crate) fn assemble_from(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    coupling: &[f64],
) -> BorderedMatrix {
    let n = state.num_nodes();
    let k = state.k();
    let sigma = state.sign.sigma();
    let mut triplets = Vec::new();
    for i in 0..k {
        let dm = geom.ma_linearization(bg, i, &state.phis[i]);
        triplets.extend(dm.triplets().map(|(r, c, v)| (i * n + r, i * n + c, v)));
        let ci = bg.constants()[i];
        for (j, &t) in state.params.iter().enumerate() {
            if t != 0.0 {
                for (p, &e) in coupling.iter().enumerate() {
                    triplets.push((i * n + p, j * n + p, -sigma * ci * e * t));
                }
            }
        }
    }
    let core = SparseMatrix::from_triplets(k * n, k * n, &triplets);
    let (columns, rows) = gauge_borders(geom, state);
    BorderedMatrix::new(core, columns, rows)
}

pub(crate) fn gauge_borders(
    geom: &DiscreteGeometry,
    state: &CoupledState,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = state.num_nodes();
    let k = state.k();
    let volume = geom.volume();
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for j in pinned_slots(state) {
        let mut col = vec![0.0; k * n];
        col[j * n..(j + 1) * n].fill(1.0);
        let mut row = vec![0.0; k * n];
        for (r, w) in row[j * n..(j + 1) * n].iter_mut().zip(geom.weights()) {
            *r = w / volume;
        }
        columns.push(col);
        rows.push(row);
    }
    (columns, rows)
}

/// `phi_j -> phi_j + c_j`. For `t > 0` the shift must satisfy
/// `sum_j t_j c_j = 0` so that the residual is preserved.
pub fn gauge_shift(state: &CoupledState, c: &[f64]) -> Result<CoupledState> {
    if c.len() != state.k() {
        return Err(Error::InvalidInput(format!(
            "{} shifts for {} potentials",
            c.len(),
            state.k()
        )));
    }
    let weighted: f64 = c.iter().zip(&state.params).map(|(ci, t)| ci * t).sum();
    let scale: f64 = c
        .iter()
        .zip(&state.params)
        .map(|(ci, t)| (ci * t).abs())
        .sum();
    if weighted.abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::GaugeViolation(format!(
            "shift changes sum_j t_j c_j by {weighted:e}"
        )));
    }
    Ok(apply_shift(state, c))
}

fn apply_shift(state: &CoupledState, c: &[f64]) -> CoupledState {
    let phis = state
        .phis
        .iter()
        .zip(c)
        .map(|(phi, &cj)| phi.iter().map(|v| v + cj).collect())
        .collect();
    state.with_phis(phis)
}

/// Round-off level of the residual sup norm at `state`: `2 eps` times the
/// largest cancelling term. Residuals below this carry no information.
pub fn residual_floor(geom: &DiscreteGeometry, bg: &BackgroundSplit, state: &CoupledState) -> f64 {
    let e = exponent(state);
    let mut top = 0.0f64;
    for (i, &c) in bg.constants().iter().enumerate() {
        let scale = geom.density_scale(bg, i, state.phi(i));
        for (s, e) in scale.iter().zip(&e) {
            top = top.max(s + c * e.exp() * (1.0 + e.abs()));
        }
    }
    2.0 * f64::EPSILON * top
}

/// Reporting copy with `sup phi_j = 0` for `j >= 2`, compensated in `phi_1`.
pub fn to_paper_gauge(state: &CoupledState) -> Result<Vec<Vec<f64>>> {
    let t1 = state.params[0];
    if !(t1 > 0.0) {
        return Err(Error::GaugeViolation(
            "the sup gauge needs t_1 > 0 to compensate phi_1".into(),
        ));
    }
    let mut c = vec![0.0; state.k()];
    for j in 1..state.k() {
        c[j] = -state.phis[j]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
    }
    let weighted: f64 = c
        .iter()
        .zip(&state.params)
        .skip(1)
        .map(|(cj, t)| cj * t)
        .sum();
    c[0] = -weighted / t1;
    Ok(apply_shift(state, &c).phis)
}

/// Residual-preserving shift onto the internal mean-zero gauge.
pub fn normalize_gauge(geom: &DiscreteGeometry, state: &CoupledState) -> CoupledState {
    let mut c: Vec<f64> = state.phis.iter().map(|p| -geom.mean(p)).collect();
    let t1 = state.params[0];
    if t1 > 0.0 {
        let weighted: f64 = c
            .iter()
            .zip(&state.params)
            .skip(1)
            .map(|(cj, t)| cj * t)
            .sum();
        c[0] = -weighted / t1;
    }
    apply_shift(state, &c)
}
