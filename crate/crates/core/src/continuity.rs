//! Path following in `t` from the decoupled Calabi problems at `t = 0`.
//!
//! Each step takes an Euler predictor along the tangent of the solution
//! curve and corrects it with damped Newton. The step size adapts to the
//! Newton iteration count.

use crate::error::{Error, Result};
use crate::estimates::{
    c0_monitor, jensen_green_check, laplacian_quantity, MonitorRecord, MonitorSettings,
};
use crate::geometry::{BackgroundSplit, DiscreteGeometry};
use crate::linear_analysis::{assemble_l, smallest_eigenvalue};
use crate::system::{
    assemble_from, evaluate, normalize_gauge, residual_floor, to_paper_gauge, CoupledState,
    Evaluation,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoParams {
    /// Sufficient-decrease factor on the merit slope.
    pub slope: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            slope: 1e-4,
            backtrack: 0.5,
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub t_max: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    /// Sup-norm residual tolerance; `None` means `1e-10 * max_i C_i`. Newton
    /// raises it to the round-off floor of the current iterate when that is larger.
    pub newton_tol: Option<f64>,
    pub newton_max_iters: usize,
    pub armijo: ArmijoParams,
    /// Stop when `sup |phi_1|` (sup-normalized gauge) exceeds this.
    pub blowup_threshold: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            dt_initial: 0.05,
            dt_min: 1e-4,
            newton_tol: None,
            newton_max_iters: 30,
            armijo: ArmijoParams::default(),
            blowup_threshold: 50.0,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if !(0.0..=1.0).contains(&self.t_max) {
            return bad("t_max must lie in [0, 1]");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_initial) {
            return bad("need 0 < dt_min <= dt_initial");
        }
        if let Some(tol) = self.newton_tol {
            if !(tol > 0.0) {
                return bad("newton_tol must be positive");
            }
        }
        if self.newton_max_iters == 0 {
            return bad("newton_max_iters must be positive");
        }
        let a = &self.armijo;
        if !(a.slope > 0.0 && a.slope < 0.5 && a.backtrack > 0.0 && a.backtrack < 1.0) {
            return bad("Armijo slope must lie in (0, 1/2) and backtrack in (0, 1)");
        }
        if !(self.blowup_threshold > 0.0) {
            return bad("blowup_threshold must be positive");
        }
        Ok(())
    }

    pub fn tolerance(&self, bg: &BackgroundSplit) -> f64 {
        self.newton_tol.unwrap_or(1e-10 * bg.max_constant())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_sup: f64,
    pub residual_l2: f64,
    /// Halvings taken by the line search, summed over iterations.
    pub backtracks: usize,
    pub converged: bool,
}

/// Damped Newton on `R = 0` at the state's fixed parameter.
pub fn newton_solve(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    cfg: &PathConfig,
) -> Result<(CoupledState, NewtonReport)> {
    let nominal = cfg.tolerance(bg);
    let mut current = normalize_gauge(geom, state);
    let mut eval = evaluate(geom, bg, &current);
    if !eval.admissible() {
        return Err(Error::PositivityLost(
            "initial iterate is outside the admissible cone".into(),
        ));
    }
    let mut backtracks = 0;
    let mut iterations = 0;
    loop {
        // fine radial grids can put the round-off level above the nominal tolerance
        let tol = nominal.max(residual_floor(geom, bg, &current));
        if eval.residual.sup <= tol {
            let report = NewtonReport {
                iterations,
                residual_sup: eval.residual.sup,
                residual_l2: eval.residual.l2,
                backtracks,
                converged: true,
            };
            return Ok((current, report));
        }
        if iterations == cfg.newton_max_iters {
            return Err(Error::NonConvergence {
                iterations,
                residual: eval.residual.sup,
                reason: "iteration limit reached".into(),
            });
        }
        iterations += 1;

        let step = newton_direction(geom, bg, &current, &eval)?;
        let merit = 0.5 * eval.residual.l2 * eval.residual.l2;
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut any_admissible = false;
        for _ in 0..=cfg.armijo.max_backtracks {
            let trial = current.with_phis(axpy(current.phis(), alpha, &step));
            let trial_eval = evaluate(geom, bg, &trial);
            if trial_eval.admissible() {
                any_admissible = true;
                let m = 0.5 * trial_eval.residual.l2 * trial_eval.residual.l2;
                // the Newton direction has merit slope -2 * merit
                if m <= merit * (1.0 - 2.0 * cfg.armijo.slope * alpha)
                    || trial_eval.residual.sup <= tol
                {
                    accepted = Some((trial, trial_eval));
                    break;
                }
            }
            alpha *= cfg.armijo.backtrack;
            backtracks += 1;
        }
        match accepted {
            Some((trial, trial_eval)) => {
                current = normalize_gauge(geom, &trial);
                eval = if current == trial {
                    trial_eval
                } else {
                    evaluate(geom, bg, &current)
                };
            }
            None if !any_admissible => {
                return Err(Error::PositivityLost(format!(
                    "no admissible iterate after {} backtracks (residual {:.3e})",
                    cfg.armijo.max_backtracks, eval.residual.sup
                )))
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: eval.residual.sup,
                    reason: "line search found no sufficient decrease".into(),
                })
            }
        }
    }
}

fn newton_direction(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    eval: &Evaluation,
) -> Result<Vec<Vec<f64>>> {
    let jac = assemble_from(geom, bg, state, &eval.coupling);
    let lu = jac.factor().map_err(linear_failure)?;
    let mut rhs: Vec<f64> = eval.residual.as_slice().iter().map(|r| -r).collect();
    // drive any gauge drift to zero along with the residual
    for row in &jac.rows {
        rhs.push(-crate::linalg::dot(row, &state.stacked()));
    }
    let x = lu.solve(&rhs).map_err(linear_failure)?;
    Ok(unstack(&x, state.k(), state.num_nodes()))
}

fn linear_failure(e: Error) -> Error {
    match e {
        Error::SolveFailure(m) => Error::LinearSolveFailure(m),
        other => other,
    }
}

fn unstack(x: &[f64], k: usize, n: usize) -> Vec<Vec<f64>> {
    (0..k).map(|i| x[i * n..(i + 1) * n].to_vec()).collect()
}

fn axpy(phis: &[Vec<f64>], alpha: f64, step: &[Vec<f64>]) -> Vec<Vec<f64>> {
    phis.iter()
        .zip(step)
        .map(|(p, d)| p.iter().zip(d).map(|(a, b)| a + alpha * b).collect())
        .collect()
}

/// Solves the decoupled `t = 0` problems `m_i[phi_i] = C_i` with mean-zero
/// potentials. On meshes this is one Poisson solve per equation.
pub fn solve_calabi_initial(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    cfg: &PathConfig,
) -> Result<(CoupledState, NewtonReport)> {
    let start = CoupledState::zeros(geom, bg, 0.0);
    newton_solve(geom, bg, &start, cfg)
        .map_err(|e| Error::SolveFailure(format!("t = 0 solve: {e}")))
}

/// Tangent step along the scalar path: solves `J v = -dR/dt` and returns
/// `state + dt v` at `t + dt`, re-gauged.
pub fn predictor(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    dt: f64,
) -> Result<CoupledState> {
    let t = state.t();
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let eval = evaluate(geom, bg, state);
    let n = state.num_nodes();
    let sigma = state.sign().sigma();
    let mut sum = vec![0.0; n];
    for phi in state.phis() {
        for (s, p) in sum.iter_mut().zip(phi) {
            *s += p;
        }
    }
    let jac = assemble_from(geom, bg, state, &eval.coupling);
    let mut rhs = Vec::with_capacity(jac.dim());
    for &c in bg.constants() {
        // dR_i/dt = -sigma C_i e^E sum_j phi_j
        rhs.extend(
            eval.coupling
                .iter()
                .zip(&sum)
                .map(|(e, s)| sigma * c * e * s),
        );
    }
    rhs.resize(jac.dim(), 0.0);
    let lu = jac.factor().map_err(linear_failure)?;
    let v = lu.solve(&rhs).map_err(linear_failure)?;
    let velocity = unstack(&v, state.k(), n);
    let moved = CoupledState::new(t + dt, axpy(state.phis(), dt, &velocity), state.sign());
    Ok(normalize_gauge(geom, &moved))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathStatus {
    ReachedTMax,
    Stalled { t: f64, reason: String },
    PositivityLost { t: f64 },
    BlowupDetected { t: f64 },
}

impl PathStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PathStatus::ReachedTMax => "reached_t_max",
            PathStatus::Stalled { .. } => "stalled",
            PathStatus::PositivityLost { .. } => "positivity_lost",
            PathStatus::BlowupDetected { .. } => "blowup_detected",
        }
    }
}

impl std::fmt::Display for PathStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PathStatus::ReachedTMax => write!(f, "reached t_max"),
            PathStatus::Stalled { t, reason } => write!(f, "stalled at t = {t}: {reason}"),
            PathStatus::PositivityLost { t } => write!(f, "positivity lost beyond t = {t}"),
            PathStatus::BlowupDetected { t } => write!(f, "blowup detected at t = {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub state: CoupledState,
    pub record: MonitorRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub accepted: Vec<PathStep>,
    pub status: PathStatus,
}

impl PathResult {
    pub fn last_state(&self) -> Option<&CoupledState> {
        self.accepted.last().map(|s| &s.state)
    }
}

/// Runs the path with the default monitors.
pub fn run_path(geom: &DiscreteGeometry, bg: &BackgroundSplit, cfg: &PathConfig) -> PathResult {
    run_path_monitored(geom, bg, cfg, &MonitorSettings::default())
}

pub fn run_path_monitored(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    cfg: &PathConfig,
    monitors: &MonitorSettings,
) -> PathResult {
    let mut accepted = Vec::new();
    if let Err(e) = cfg.validate() {
        let status = PathStatus::Stalled {
            t: 0.0,
            reason: e.to_string(),
        };
        return PathResult { accepted, status };
    }
    let green = if monitors.jensen {
        geom.green_constant(monitors.green_samples).ok()
    } else {
        None
    };
    let record = |state: &CoupledState, report: &NewtonReport, dt: f64| {
        monitor_record(geom, bg, state, report, dt, monitors, green)
    };

    let (mut state, report) = match solve_calabi_initial(geom, bg, cfg) {
        Ok(v) => v,
        Err(e) => {
            let status = PathStatus::Stalled {
                t: 0.0,
                reason: e.to_string(),
            };
            return PathResult { accepted, status };
        }
    };
    accepted.push(PathStep {
        record: record(&state, &report, 0.0),
        state: state.clone(),
    });

    let mut dt = cfg.dt_initial;
    let dt_max = 4.0 * cfg.dt_initial;
    let status = loop {
        let t = state.t();
        if t >= cfg.t_max {
            break PathStatus::ReachedTMax;
        }
        // land on t_max rather than leave a sliver below dt_min
        let (step, t_new) = if t + dt + 0.5 * cfg.dt_min >= cfg.t_max {
            (cfg.t_max - t, cfg.t_max)
        } else {
            (dt, t + dt)
        };
        let attempt = predictor(geom, bg, &state, step)
            .and_then(|p| newton_solve(geom, bg, &p.at_parameter(t_new), cfg));
        match attempt {
            Ok((next, report)) => {
                state = next;
                accepted.push(PathStep {
                    record: record(&state, &report, step),
                    state: state.clone(),
                });
                if phi1_sup(&state) > cfg.blowup_threshold {
                    break PathStatus::BlowupDetected { t: t_new };
                }
                if report.iterations > 8 {
                    dt *= 0.5;
                } else if report.iterations <= 3 {
                    dt *= 2.0;
                }
                dt = dt.clamp(cfg.dt_min, dt_max);
            }
            Err(e) => {
                dt *= 0.5;
                if dt < cfg.dt_min {
                    break match e {
                        Error::PositivityLost(_) => PathStatus::PositivityLost { t },
                        other => PathStatus::Stalled {
                            t,
                            reason: other.to_string(),
                        },
                    };
                }
            }
        }
    };
    PathResult { accepted, status }
}

fn phi1_sup(state: &CoupledState) -> f64 {
    let phis = to_paper_gauge(state).unwrap_or_else(|_| state.phis().to_vec());
    phis[0].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Evaluates the enabled monitors on an accepted state.
pub fn monitor_record(
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
    state: &CoupledState,
    report: &NewtonReport,
    dt: f64,
    monitors: &MonitorSettings,
    green_constant: Option<f64>,
) -> MonitorRecord {
    let u_max = monitors.laplacian.then(|| {
        laplacian_quantity(geom, bg, state, monitors.lambda)
            .iter()
            .map(|(u, _)| *u)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let jensen = green_constant.map(|c| jensen_green_check(geom, bg, state, c));
    let min_eig = if monitors.spectrum {
        assemble_l(geom, bg, state)
            .and_then(|op| smallest_eigenvalue(&op))
            .ok()
            .map(|(value, _)| value)
    } else {
        None
    };
    MonitorRecord {
        t: state.t(),
        newton_iters: report.iterations,
        residual_sup: report.residual_sup,
        residual_l2: report.residual_l2,
        c0: monitors.c0.then(|| c0_monitor(state)),
        u_max,
        lambda: monitors.lambda,
        jensen,
        min_eig,
        dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_radial_geometry, build_surface_geometry, Sign, TriangleMesh};
    use crate::system::residual;

    #[test]
    fn calabi_start_is_a_poisson_solve() {
        let g = build_surface_geometry(TriangleMesh::icosphere(3)).unwrap();
        let h: Vec<f64> = g
            .positions()
            .iter()
            .map(|p| p[0] * p[1] + 0.5 * p[2])
            .collect();
        let mh = g.mean(&h);
        let c1 = 1.3;
        let f1: Vec<f64> = h.iter().map(|v| c1 * (1.0 + 0.1 * (v - mh))).collect();
        let f2 = vec![0.8; g.num_nodes()];
        let bg = BackgroundSplit::from_densities(&g, vec![f1.clone(), f2], Sign::AntiFano).unwrap();
        let cfg = PathConfig::default();
        let (s, rep) = solve_calabi_initial(&g, &bg, &cfg).unwrap();
        assert!(rep.iterations <= 2);
        assert!(s.phi(1).iter().all(|v| v.abs() < 1e-14));
        let lap = g.apply_laplacian(s.phi(0));
        for p in 0..g.num_nodes() {
            assert!((lap[p] - (bg.constants()[0] - f1[p])).abs() < 1e-9);
        }
        assert!(g.mean(s.phi(0)).abs() < 1e-14);
    }

    #[test]
    fn exact_start_takes_no_iterations() {
        let (g, bg) = build_radial_geometry(1, 64, &[1.0, 1.0]).unwrap();
        let s = CoupledState::zeros(&g, &bg, 0.7);
        let (out, rep) = newton_solve(&g, &bg, &s, &PathConfig::default()).unwrap();
        assert!(rep.converged && rep.iterations == 0);
        assert_eq!(out, s);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let g = build_surface_geometry(TriangleMesh::icosphere(2)).unwrap();
        let f: Vec<Vec<f64>> = (0..2)
            .map(|i| g.positions().iter().map(|p| 1.0 + 0.6 * p[i]).collect())
            .collect();
        let bg = BackgroundSplit::from_densities(&g, f, Sign::AntiFano).unwrap();
        let cfg = PathConfig {
            newton_max_iters: 1,
            ..PathConfig::default()
        };
        let s = CoupledState::zeros(&g, &bg, 1.0);
        assert!(matches!(
            newton_solve(&g, &bg, &s, &cfg),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn predictor_trivial_cases() {
        let (g, bg) = build_radial_geometry(1, 64, &[1.0, 1.0]).unwrap();
        let s = CoupledState::zeros(&g, &bg, 0.3);
        let p = predictor(&g, &bg, &s, 0.1).unwrap();
        assert!(p.phis().iter().flatten().all(|v| v.abs() < 1e-14));
        assert!((p.t() - 0.4).abs() < 1e-15);
        assert_eq!(predictor(&g, &bg, &s, 0.0).unwrap(), s);
    }

    #[test]
    fn zero_t_max_gives_single_entry() {
        let (g, bg) = build_radial_geometry(1, 32, &[1.0, 1.0]).unwrap();
        let cfg = PathConfig {
            t_max: 0.0,
            ..PathConfig::default()
        };
        let r = run_path(&g, &bg, &cfg);
        assert_eq!(r.status, PathStatus::ReachedTMax);
        assert_eq!(r.accepted.len(), 1);
        assert_eq!(r.accepted[0].state.t(), 0.0);
    }

    #[test]
    fn anti_fano_mesh_path_completes() {
        let g = build_surface_geometry(TriangleMesh::icosphere(2)).unwrap();
        let f: Vec<Vec<f64>> = vec![
            g.positions().iter().map(|p| 1.0 + 0.4 * p[2]).collect(),
            g.positions()
                .iter()
                .map(|p| 0.9 + 0.3 * (2.0 * p[0]).sin())
                .collect(),
        ];
        let bg = BackgroundSplit::from_densities(&g, f, Sign::AntiFano).unwrap();
        let cfg = PathConfig::default();
        let r = run_path(&g, &bg, &cfg);
        assert_eq!(r.status, PathStatus::ReachedTMax);
        let tol = cfg.tolerance(&bg);
        let mut last_t = -1.0;
        for step in &r.accepted {
            assert!(step.state.t() > last_t);
            last_t = step.state.t();
            assert!(residual(&g, &bg, &step.state).sup <= tol);
            assert!(g.mean(step.state.phi(1)).abs() <= 1e-12 * g.volume());
            let j = step.record.jensen.as_ref().unwrap();
            assert!(j.jensen_half);
        }
        assert_eq!(last_t, 1.0);
    }

    #[test]
    fn monitors_do_not_change_iterates() {
        let g = build_surface_geometry(TriangleMesh::icosphere(1)).unwrap();
        let f: Vec<Vec<f64>> = (0..2)
            .map(|i| g.positions().iter().map(|p| 1.0 + 0.3 * p[i]).collect())
            .collect();
        let bg = BackgroundSplit::from_densities(&g, f, Sign::AntiFano).unwrap();
        let off = MonitorSettings {
            c0: false,
            laplacian: false,
            jensen: false,
            spectrum: false,
            ..MonitorSettings::default()
        };
        let on = MonitorSettings {
            spectrum: true,
            ..MonitorSettings::default()
        };
        let cfg = PathConfig::default();
        let a = run_path_monitored(&g, &bg, &cfg, &off);
        let b = run_path_monitored(&g, &bg, &cfg, &on);
        assert_eq!(a.status, b.status);
        assert_eq!(a.accepted.len(), b.accepted.len());
        for (x, y) in a.accepted.iter().zip(&b.accepted) {
            assert_eq!(x.state, y.state);
        }
        assert!(b.accepted.iter().all(|s| s.record.min_eig.is_some()));
    }
}
