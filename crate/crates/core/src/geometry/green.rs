//! Green's function mass of the background Laplacian.
//!
//! For a node `x`, `G(x, .)` solves `-Delta G = delta_x - 1/V` with zero mean,
//! so that `v(x) - mean(v) = -int G(x, .) Delta v dA`. Its positivization
//! `G - min G` has mass `-V min G`, and the Green constant is the largest such
//! mass over the sampled nodes.

use super::DiscreteGeometry;
use crate::error::{Error, Result};
use crate::linalg::BorderedMatrix;

pub(super) fn green_constant(geom: &DiscreteGeometry, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidInput(
            "green_constant needs at least one sample".into(),
        ));
    }
    let n = geom.num_nodes();
    let volume = geom.volume();
    let neg_stiffness = geom.stiffness().scale_rows(&vec![-1.0; n]);
    let system = BorderedMatrix::new(
        neg_stiffness,
        vec![vec![1.0; n]],
        vec![geom.weights().to_vec()],
    );
    let lu = system
        .factor()
        .map_err(|e| Error::SolveFailure(format!("Green's function system: {e}")))?;

    let mut best: f64 = 0.0;
    for x in geom.sample_order(samples.min(n)) {
        let mut rhs: Vec<f64> = geom.weights().iter().map(|w| -w / volume).collect();
        rhs[x] += 1.0;
        rhs.push(0.0);
        let sol = lu.solve(&rhs)?;
        let g = &sol[..n];
        let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let mass: f64 = g
            .iter()
            .zip(geom.weights())
            .map(|(gi, w)| (gi - min) * w)
            .sum();
        best = best.max(mass);
    }
    Ok(best)
}

/// Greedy farthest-point ordering starting at node 0. Prefixes are nested.
pub(super) fn farthest_point_order(points: &[[f64; 3]], count: usize) -> Vec<usize> {
    let n = points.len();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let dist2 = |a: [f64; 3], b: [f64; 3]| {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };
    let mut order = vec![0usize];
    let mut nearest: Vec<f64> = points.iter().map(|&p| dist2(p, points[0])).collect();
    nearest[0] = -1.0;
    while order.len() < count {
        let (next, _) = nearest
            .iter()
            .enumerate()
            .fold(
                (usize::MAX, f64::MIN),
                |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
            );
        order.push(next);
        nearest[next] = -1.0;
        for (i, p) in points.iter().enumerate() {
            if nearest[i] >= 0.0 {
                nearest[i] = nearest[i].min(dist2(*p, points[next]));
            }
        }
    }
    order
}
