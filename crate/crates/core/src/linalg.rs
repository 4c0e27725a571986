//! Sparse matrices, sparse LU, and bordered systems.
//!
//! The solver repeatedly needs systems of the form
//!
//! ```text
//! [ A   B ] [x]   [r]
//! [ C^T 0 ] [mu] = [s]
//! ```
//!
//! where `A` is sparse and singular on a small space of constants, and the
//! border columns `B` and rows `C^T` are dense (slot indicators and volume
//! weights). Dense rows destroy fill-reducing orderings, so [`BorderedLu`]
//! factors a sparse surrogate in which each border is replaced by a single
//! pinned entry, and restores the true borders with a rank-`2g` Woodbury
//! correction.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = cursor[r];
            cols[slot] = c;
            vals[slot] = v;
            cursor[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|s| (cols[s], vals[s])));
            scratch.sort_by_key(|&(c, _)| c);
            let mut iter = scratch.iter().peekable();
            while let Some(&(c, mut v)) = iter.next() {
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Returns `diag(s) * self`.
    pub fn scale_rows(&self, s: &[f64]) -> Self {
        assert_eq!(s.len(), self.nrows);
        let mut out = self.clone();
        for r in 0..self.nrows {
            for v in &mut out.values[self.row_ptr[r]..self.row_ptr[r + 1]] {
                *v *= s[r];
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v).sum())
            .collect()
    }
}

static SEQUENTIAL: Once = Once::new();

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn factor(matrix: &SparseMatrix) -> Result<Self> {
        // Sequential kernels keep every run bitwise reproducible.
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        if matrix.nrows != matrix.ncols {
            return Err(Error::SolveFailure(format!(
                "matrix is {}x{}, expected square",
                matrix.nrows, matrix.ncols
            )));
        }
        let n = matrix.nrows;
        let triplets: Vec<Triplet<usize, usize, f64>> = matrix
            .triplets()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SolveFailure(format!("sparse assembly: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::SolveFailure(format!("sparse LU: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        assert_eq!(x.len(), self.n);
        let view = MatMut::from_column_major_slice_mut(x, self.n, 1);
        self.lu.solve_in_place(view);
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::SolveFailure(
                "non-finite solution (singular matrix)".into(),
            ))
        }
    }
}

/// A sparse core matrix bordered by dense columns and rows.
#[derive(Debug, Clone)]
pub struct BorderedMatrix {
    pub core: SparseMatrix,
    /// Border columns, each of length `core.nrows()`.
    pub columns: Vec<Vec<f64>>,
    /// Border rows, each of length `core.ncols()`.
    pub rows: Vec<Vec<f64>>,
}

impl BorderedMatrix {
    pub fn new(core: SparseMatrix, columns: Vec<Vec<f64>>, rows: Vec<Vec<f64>>) -> Self {
        assert_eq!(core.nrows(), core.ncols());
        assert_eq!(columns.len(), rows.len());
        for (c, r) in columns.iter().zip(&rows) {
            assert_eq!(c.len(), core.nrows());
            assert_eq!(r.len(), core.ncols());
        }
        Self {
            core,
            columns,
            rows,
        }
    }

    pub fn core_dim(&self) -> usize {
        self.core.nrows()
    }

    pub fn border_count(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.core_dim() + self.border_count()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.core_dim();
        assert_eq!(x.len(), self.dim());
        let mut y = self.core.mul_vec(&x[..n]);
        for (col, &mu) in self.columns.iter().zip(&x[n..]) {
            for (yi, ci) in y.iter_mut().zip(col) {
                *yi += ci * mu;
            }
        }
        y.extend(self.rows.iter().map(|row| dot(row, &x[..n])));
        y
    }

    /// Explicit sparse form of the full bordered matrix.
    pub fn to_sparse(&self) -> SparseMatrix {
        let n = self.core_dim();
        let mut triplets: Vec<_> = self.core.triplets().collect();
        for (g, (col, row)) in self.columns.iter().zip(&self.rows).enumerate() {
            for (i, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, n + g, v));
                }
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((n + g, j, v));
                }
            }
        }
        SparseMatrix::from_triplets(self.dim(), self.dim(), &triplets)
    }

    pub fn factor(&self) -> Result<BorderedLu> {
        BorderedLu::new(self)
    }
}

/// Factorization of a [`BorderedMatrix`].
#[derive(Debug)]
pub struct BorderedLu {
    n: usize,
    g: usize,
    surrogate: SparseLu,
    /// Surrogate solves against the low-rank update columns.
    z: Vec<Vec<f64>>,
    /// Low-rank right factors, as dense vectors of length `n + g`.
    v: Vec<Vec<f64>>,
    capacitance: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl BorderedLu {
    fn new(m: &BorderedMatrix) -> Result<Self> {
        let n = m.core_dim();
        let g = m.border_count();
        let dim = n + g;

        // Pin each border at the index where its column and row are jointly largest.
        let mut pins = Vec::with_capacity(g);
        for (col, row) in m.columns.iter().zip(&m.rows) {
            let q = (0..n)
                .filter(|q| !pins.contains(q))
                .max_by(|&a, &b| {
                    let sa = (col[a] * row[a]).abs();
                    let sb = (col[b] * row[b]).abs();
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .ok_or_else(|| Error::SolveFailure("more borders than unknowns".into()))?;
            pins.push(q);
        }

        let mut triplets: Vec<_> = m.core.triplets().collect();
        for (r, &q) in pins.iter().enumerate() {
            triplets.push((q, n + r, 1.0));
            triplets.push((n + r, q, 1.0));
        }
        let surrogate = SparseLu::factor(&SparseMatrix::from_triplets(dim, dim, &triplets))?;

        // M = S + U V^T with U = [[B - E, 0], [0, I]], V = [[0, C - E], [I, 0]].
        let mut u = Vec::with_capacity(2 * g);
        let mut v = Vec::with_capacity(2 * g);
        for (r, (col, &q)) in m.columns.iter().zip(&pins).enumerate() {
            let mut uc = vec![0.0; dim];
            uc[..n].copy_from_slice(col);
            uc[q] -= 1.0;
            u.push(uc);
            let mut vc = vec![0.0; dim];
            vc[n + r] = 1.0;
            v.push(vc);
        }
        for (r, (row, &q)) in m.rows.iter().zip(&pins).enumerate() {
            let mut uc = vec![0.0; dim];
            uc[n + r] = 1.0;
            u.push(uc);
            let mut vc = vec![0.0; dim];
            vc[..n].copy_from_slice(row);
            vc[q] -= 1.0;
            v.push(vc);
        }
        let z = u
            .iter()
            .map(|uc| surrogate.solve(uc))
            .collect::<Result<Vec<_>>>()?;
        let rank = 2 * g;
        let cap = DMatrix::from_fn(rank, rank, |i, j| {
            dot(&v[i], &z[j]) + if i == j { 1.0 } else { 0.0 }
        });
        let capacitance = cap.lu();
        if rank > 0 && !capacitance.is_invertible() {
            return Err(Error::SolveFailure("bordered system is singular".into()));
        }
        Ok(Self {
            n,
            g,
            surrogate,
            z,
            v,
            capacitance,
        })
    }

    pub fn dim(&self) -> usize {
        self.n + self.g
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.dim());
        let mut y = self.surrogate.solve(rhs)?;
        if self.g > 0 {
            let w =
                nalgebra::DVector::from_iterator(self.v.len(), self.v.iter().map(|vc| dot(vc, &y)));
            let coeffs = self
                .capacitance
                .solve(&w)
                .ok_or_else(|| Error::SolveFailure("capacitance solve failed".into()))?;
            for (zc, &c) in self.z.iter().zip(coeffs.iter()) {
                for (yi, zi) in y.iter_mut().zip(zc) {
                    *yi -= c * zi;
                }
            }
        }
        if y.iter().all(|x| x.is_finite()) {
            Ok(y)
        } else {
            Err(Error::SolveFailure("non-finite bordered solution".into()))
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum()
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> SparseMatrix {
        // Periodic 1-D Laplacian: singular on constants.
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -2.0));
            t.push((i, (i + 1) % n, 1.0));
            t.push((i, (i + n - 1) % n, 1.0));
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn sparse_lu_solves() {
        let mut t: Vec<_> = path_laplacian(20).triplets().collect();
        t.push((0, 0, -1.0));
        let a = SparseMatrix::from_triplets(20, 20, &t);
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x);
        let sol = SparseLu::factor(&a).unwrap().solve(&b).unwrap();
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn bordered_matches_explicit_dense_solve() {
        let n = 30;
        let core = path_laplacian(n);
        let weights: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64).cos()).collect();
        let m = BorderedMatrix::new(core, vec![vec![1.0; n]], vec![weights]);
        let dense = {
            let s = m.to_sparse();
            DMatrix::from_fn(m.dim(), m.dim(), |i, j| s.get(i, j))
        };
        let rhs: Vec<f64> = (0..m.dim()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let expected = dense
            .lu()
            .solve(&nalgebra::DVector::from_vec(rhs.clone()))
            .unwrap();
        let got = m.factor().unwrap().solve(&rhs).unwrap();
        for (g, e) in got.iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-10, "{g} vs {e}");
        }
        let back = m.apply(&got);
        for (b, r) in back.iter().zip(&rhs) {
            assert!((b - r).abs() < 1e-10);
        }
    }

    #[test]
    fn bordered_with_two_blocks() {
        // Two decoupled singular blocks, each bordered by its own constant.
        let n = 12;
        let lap = path_laplacian(n);
        let mut t: Vec<_> = lap.triplets().collect();
        t.extend(lap.triplets().map(|(r, c, v)| (r + n, c + n, 2.0 * v)));
        let core = SparseMatrix::from_triplets(2 * n, 2 * n, &t);
        let mut c0 = vec![0.0; 2 * n];
        let mut c1 = vec![0.0; 2 * n];
        c0[..n].fill(1.0);
        c1[n..].fill(1.0);
        let m = BorderedMatrix::new(core, vec![c0.clone(), c1.clone()], vec![c0, c1]);
        let rhs: Vec<f64> = (0..m.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = m.factor().unwrap().solve(&rhs).unwrap();
        let back = m.apply(&x);
        for (b, r) in back.iter().zip(&rhs) {
            assert!((b - r).abs() < 1e-10);
        }
    }
}
