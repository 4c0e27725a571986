//! Configuration, manufactured backgrounds, run orchestration, and outputs.

pub mod config;
pub mod output;
mod run;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use run::{
    exit_code, load_problem, run_command, run_green, run_manufacture, run_solve, run_verify,
    Command, SolveOutcome, VerifyOutcome,
};

use crate::error::{Error, Result};
use crate::geometry::{BackgroundSplit, DiscreteGeometry, Sign};

/// Mesh background for which `target` (after a constant shift of its first
/// component) solves the system exactly at parameter `t_star`:
/// `f_i = C_i exp(sigma t_star sum_j phi_j) - Delta phi_i`.
///
/// The shift makes `mean exp(sigma t_star sum_j phi_j) = 1`, which every
/// solution satisfies. Returns the split and the shifted target.
pub fn manufacture_background(
    geom: &DiscreteGeometry,
    target: &[Vec<f64>],
    t_star: f64,
    sign: Sign,
    constants: &[f64],
) -> Result<(BackgroundSplit, Vec<Vec<f64>>)> {
    if !geom.is_mesh() {
        return Err(Error::UnsupportedBackend(
            "manufactured backgrounds need the mesh backend".into(),
        ));
    }
    if !(0.0..=1.0).contains(&t_star) {
        return Err(Error::InvalidInput(format!(
            "t_star = {t_star} is outside [0, 1]"
        )));
    }
    if target.len() != constants.len() || target.is_empty() {
        return Err(Error::InvalidInput(
            "need one constant per target potential".into(),
        ));
    }
    if target.iter().any(|p| p.len() != geom.num_nodes()) {
        return Err(Error::InvalidInput(
            "target length differs from the node count".into(),
        ));
    }
    let sigma = sign.sigma();
    let n = geom.num_nodes();
    let mut sum = vec![0.0; n];
    for phi in target {
        for (s, p) in sum.iter_mut().zip(phi) {
            *s += p;
        }
    }
    let mut shifted = target.to_vec();
    if t_star > 0.0 {
        let top = sum
            .iter()
            .map(|s| sigma * t_star * s)
            .fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = sum
            .iter()
            .map(|s| (sigma * t_star * s - top).exp())
            .collect();
        let log_mean = top + geom.mean(&e).ln();
        let c = -log_mean / (sigma * t_star);
        shifted[0].iter_mut().for_each(|v| *v += c);
        sum.iter_mut().for_each(|v| *v += c);
    }
    let coupling: Vec<f64> = sum.iter().map(|s| (sigma * t_star * s).exp()).collect();
    let mut densities = Vec::with_capacity(target.len());
    for (i, (phi, &c)) in shifted.iter().zip(constants).enumerate() {
        let lap = geom.apply_laplacian(phi);
        let f: Vec<f64> = coupling.iter().zip(&lap).map(|(e, l)| c * e - l).collect();
        if let Some(p) = f.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::InfeasibleTarget(format!(
                "f_{} = {:.3e} at node {p}; increase C_{} or shrink the target",
                i + 1,
                f[p],
                i + 1
            )));
        }
        densities.push(f);
    }
    Ok((
        BackgroundSplit::from_densities(geom, densities, sign)?,
        shifted,
    ))
}
