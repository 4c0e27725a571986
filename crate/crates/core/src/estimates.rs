//! A priori estimate quantities evaluated on solver states.
//!
//! These are monitors: pure functions of a state that the path driver
//! records but never feeds back into the iteration.

use crate::geometry::{BackgroundSplit, DiscreteGeometry, Sign};
use crate::system::{to_paper_gauge, CoupledState};

/// Which monitors the path driver evaluates at each accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSettings {
    pub c0: bool,
    pub laplacian: bool,
    /// Exponent in `u_i = exp(-lambda phi_i) (n + Delta_theta phi_i)`.
    pub lambda: f64,
    pub jensen: bool,
    /// Nodes sampled for the Green constant; `>= N` is exact.
    pub green_samples: usize,
    /// Smallest eigenvalue of the openness operator (one sparse LU per step).
    pub spectrum: bool,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            c0: true,
            laplacian: true,
            lambda: 1.0,
            jensen: true,
            green_samples: 16,
            spectrum: false,
        }
    }
}

/// One row of the path trail. Disabled monitors are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRecord {
    pub t: f64,
    pub newton_iters: usize,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub c0: Option<C0Report>,
    pub u_max: Option<f64>,
    pub lambda: f64,
    pub jensen: Option<JensenCheck>,
    pub min_eig: Option<f64>,
    /// Step size that produced this state (0 at the start).
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct C0Report {
    pub sup: Vec<f64>,
    pub inf: Vec<f64>,
    /// False when `t_1 = 0` and the internal mean-zero gauge is reported instead.
    pub paper_gauge: bool,
}

impl C0Report {
    pub fn sup_abs(&self, i: usize) -> f64 {
        self.sup[i].abs().max(self.inf[i].abs())
    }
}

/// Per-equation sup and inf in the sup-normalized gauge.
pub fn c0_monitor(state: &CoupledState) -> C0Report {
    let (phis, paper_gauge) = match to_paper_gauge(state) {
        Ok(p) => (p, true),
        Err(_) => (state.phis().to_vec(), false),
    };
    let sup = phis
        .iter()
        .map(|p| p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let inf = phis
        .iter()
        .map(|p| p.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    C0Report {
        sup,
        inf,
        paper_gauge,
    }
}

/// `sup_p u_i(p)` and its node for each equation.
pub fn laplacian_quantity(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    lambda: f64,
) -> Vec<(f64, usize)> {
    assert!(lambda > 0.0, "lambda must be positive");
    (0..state.k())
        .map(|i| {
            let tr = geom.trace_wrt_theta(bg, i, state.phi(i));
            tr.iter()
                .zip(state.phi(i))
                .map(|(tr, phi)| (-lambda * phi).exp() * tr)
                .enumerate()
                .fold((f64::NEG_INFINITY, 0), |best, (p, u)| {
                    if u > best.0 {
                        (u, p)
                    } else {
                        best
                    }
                })
        })
        .collect()
}

/// Values of `u_i` at every node, for positivity checks.
pub fn laplacian_quantity_field(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    i: usize,
    lambda: f64,
) -> Vec<f64> {
    geom.trace_wrt_theta(bg, i, state.phi(i))
        .iter()
        .zip(state.phi(i))
        .map(|(tr, phi)| (-lambda * phi).exp() * tr)
        .collect()
}

/// Two-step C0 check on `u = sum_j t_j phi_j`:
/// `sup u - mean u <= C_G sup(sum_j t_j tr theta_j)` by the Green representation,
/// and `mean u <= log mean exp(u)` by convexity.
#[derive(Debug, Clone, PartialEq)]
pub struct JensenCheck {
    /// `sup u - log((1/V) int e^u)`.
    pub gap: f64,
    pub bound: f64,
    pub mean_u: f64,
    pub log_mean_exp: f64,
    /// `gap <= bound + 1e-8`.
    pub pass: bool,
    /// `mean_u <= log_mean_exp`; holds for every state.
    pub jensen_half: bool,
    /// Green half, `sup u - mean u <= bound + 1e-8`.
    pub green_half: bool,
    /// Fano runs are outside the estimate's hypotheses.
    pub informational: bool,
}

pub fn jensen_green_check(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    green_constant: f64,
) -> JensenCheck {
    let n = geom.num_nodes();
    let mut u = vec![0.0; n];
    let mut trace = vec![0.0; n];
    for (i, &t) in state.params().iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let tr = geom.theta_trace(bg, i);
        for p in 0..n {
            u[p] += t * state.phi(i)[p];
            trace[p] += t * tr[p];
        }
    }
    let sup_u = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_u = geom.mean(&u);
    // shift by sup u before exponentiating
    let e: Vec<f64> = u.iter().map(|v| (v - sup_u).exp()).collect();
    let log_mean_exp = sup_u + geom.mean(&e).ln();
    let gap = sup_u - log_mean_exp;
    let bound = green_constant * trace.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-8;
    JensenCheck {
        gap,
        bound,
        mean_u,
        log_mean_exp,
        pass: gap <= bound + tol,
        jensen_half: mean_u <= log_mean_exp + 1e-14 * (1.0 + log_mean_exp.abs()),
        green_half: sup_u - mean_u <= bound + tol,
        informational: state.sign() == Sign::Fano,
    }
}
