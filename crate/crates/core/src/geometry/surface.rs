//! Cotangent discretization on closed triangle meshes.
//!
//! The mesh area form plays the role of `omega_0`. In complex dimension one
//! `i ddbar v = (1/2) Delta_LB v dA`, so the operator assembled here is half
//! the cotangent Laplace-Beltrami operator.

use super::mesh::{cross, dot3, norm, sub, TriangleMesh};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Symmetric stiffness `K` (rows sum to zero) and barycentric vertex areas,
/// with `Delta = diag(1/area) K`.
pub(crate) fn cotangent_stiffness(mesh: &TriangleMesh) -> Result<(SparseMatrix, Vec<f64>)> {
    let nv = mesh.num_vertices();
    let verts = mesh.vertices();
    let mut areas = vec![0.0; nv];
    let mut t = Vec::with_capacity(mesh.faces().len() * 12);
    for (f, face) in mesh.faces().iter().enumerate() {
        let area = mesh.face_area(f);
        if !(area > 0.0) {
            return Err(Error::DegenerateGeometry(format!("face {f} has zero area")));
        }
        for corner in 0..3 {
            let k = face[corner];
            let i = face[(corner + 1) % 3];
            let j = face[(corner + 2) % 3];
            let ei = sub(verts[i], verts[k]);
            let ej = sub(verts[j], verts[k]);
            let cot = dot3(ei, ej) / norm(cross(ei, ej));
            let w = 0.25 * cot;
            t.push((i, j, w));
            t.push((j, i, w));
            t.push((i, i, -w));
            t.push((j, j, -w));
            areas[k] += area / 3.0;
        }
    }
    Ok((SparseMatrix::from_triplets(nv, nv, &t), areas))
}

/// Per-vertex share of `(1/2)|grad v|^2 dA`: each triangle's energy is split
/// equally among its corners. Sums to `-sum_p v_p (Delta v)_p dA_p`.
pub(crate) fn gradient_energy(mesh: &TriangleMesh, v: &[f64]) -> Vec<f64> {
    let verts = mesh.vertices();
    let mut e = vec![0.0; mesh.num_vertices()];
    for face in mesh.faces() {
        // P1 gradient energy via the cotangent form of the element stiffness
        let mut energy = 0.0;
        for corner in 0..3 {
            let k = face[corner];
            let i = face[(corner + 1) % 3];
            let j = face[(corner + 2) % 3];
            let ei = sub(verts[i], verts[k]);
            let ej = sub(verts[j], verts[k]);
            let cot = dot3(ei, ej) / norm(cross(ei, ej));
            let dv = v[i] - v[j];
            energy += 0.25 * cot * dv * dv;
        }
        for &p in face {
            e[p] += energy / 3.0;
        }
    }
    e
}
