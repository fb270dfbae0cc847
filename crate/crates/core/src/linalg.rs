//! Sparse and banded linear algebra used by the time stepper and the
//! frequency-domain scans.
//!
//! The generators produced by the discretizations are chains of nearest
//! neighbour couplings, so after a reverse Cuthill-McKee reordering they are
//! banded with bandwidth one or two. A banded LU with partial pivoting then
//! costs O(n) per factorization and per solve.

use std::collections::VecDeque;

use nalgebra::{ComplexField, DMatrix};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Compressed sparse row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> CsrMatrix<T> {
    /// Keeps every entry that is not exactly zero.
    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let (n_rows, n_cols) = m.shape();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = m[(i, j)];
                if v != T::zero() {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn map<U, F>(&self, f: F) -> CsrMatrix<U>
    where
        F: Fn(T) -> U,
    {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same sparsity pattern, entries `f(i, j, a_ij)`.
    pub fn map_indexed<F>(&self, f: F) -> CsrMatrix<T>
    where
        F: Fn(usize, usize, T) -> T,
    {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] = f(i, self.col_idx[k], self.values[k]);
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut acc = T::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.modulus()))
    }
}

/// Symmetric permutation that makes a sparsity pattern banded, together with
/// the resulting lower and upper bandwidths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandOrdering {
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    lower: usize,
    upper: usize,
}

impl BandOrdering {
    /// Reverse Cuthill-McKee ordering of the symmetrized pattern of `m`.
    pub fn reverse_cuthill_mckee<T: ComplexField<RealField = f64> + Copy>(
        m: &CsrMatrix<T>,
    ) -> Self {
        let n = m.n_rows;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for (j, _) in m.row(i) {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

        let bfs_levels = |start: usize, seen: &[bool]| -> Vec<usize> {
            let mut dist = vec![usize::MAX; n];
            let mut order = vec![start];
            dist[start] = 0;
            let mut head = 0;
            while head < order.len() {
                let v = order[head];
                head += 1;
                for &w in &adj[v] {
                    if !seen[w] && dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        order.push(w);
                    }
                }
            }
            order.sort_by_key(|&v| (std::cmp::Reverse(dist[v]), degree[v], v));
            order
        };

        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        loop {
            let start = match (0..n).filter(|&v| !seen[v]).min_by_key(|&v| (degree[v], v)) {
                Some(v) => v,
                None => break,
            };
            // two sweeps towards a pseudo-peripheral node
            let far = bfs_levels(start, &seen)[0];
            let root = bfs_levels(far, &seen)[0];

            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
                next.sort_by_key(|&w| (degree[w], w));
                for w in next {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order.reverse();
        Self::from_permutation(order, m)
    }

    pub fn identity<T: ComplexField<RealField = f64> + Copy>(m: &CsrMatrix<T>) -> Self {
        Self::from_permutation((0..m.n_rows).collect(), m)
    }

    fn from_permutation<T: ComplexField<RealField = f64> + Copy>(
        perm: Vec<usize>,
        m: &CsrMatrix<T>,
    ) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut lower, mut upper) = (0, 0);
        for i in 0..m.n_rows {
            for (j, _) in m.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                if pi > pj {
                    lower = lower.max(pi - pj);
                } else {
                    upper = upper.max(pj - pi);
                }
            }
        }
        BandOrdering {
            perm,
            inv,
            lower,
            upper,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }
}

/// LU factorization with partial pivoting of `shift * I + M` in band storage,
/// where `M` is given in CSR form and reordered by a [`BandOrdering`].
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<T>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandedLu<T> {
    pub fn factor_shifted(
        ordering: &BandOrdering,
        shift: T,
        m: &CsrMatrix<T>,
    ) -> Result<Self, LinalgError> {
        let n = ordering.len();
        if m.n_rows != n || m.n_cols != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: m.n_rows,
            });
        }
        let (kl, ku) = ordering.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            width,
            band: vec![T::zero(); n * width],
            pivots: vec![0; n],
            perm: ordering.perm.clone(),
            inv: ordering.inv.clone(),
        };
        let mut scale = shift.modulus();
        for old_i in 0..n {
            let i = lu.inv[old_i];
            for (old_j, v) in m.row(old_i) {
                let j = lu.inv[old_j];
                *lu.at_mut(i, j) += v;
                scale = scale.max(v.modulus());
            }
            *lu.at_mut(i, i) += shift;
        }
        lu.eliminate(scale)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.band[self.idx(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        let k = self.idx(i, j);
        &mut self.band[k]
    }

    fn eliminate(&mut self, scale: f64) -> Result<(), LinalgError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).modulus();
            for i in k + 1..=last_row {
                let v = self.at(i, k).modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[k] = p;
            if best <= tiny {
                return Err(LinalgError::Singular {
                    row: k,
                    pivot: best,
                });
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let l = self.at(i, k) / pivot;
                *self.at_mut(i, k) = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.at(k, j);
                    *self.at_mut(i, j) -= l * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `(shift I + M) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T], work: &mut Vec<T>) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        work.clear();
        work.extend(self.perm.iter().map(|&old| b[old]));
        let x = work.as_mut_slice();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                let l = self.at(i, k);
                x[i] -= l * xk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                acc -= self.at(i, j) * x[j];
            }
            x[i] = acc / self.at(i, i);
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    /// Solves `(shift I + M)^* x = b` in place (conjugate transpose).
    pub fn solve_adjoint_in_place(&self, b: &mut [T], work: &mut Vec<T>) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        work.clear();
        work.extend(self.perm.iter().map(|&old| b[old]));
        let x = work.as_mut_slice();
        for i in 0..n {
            let mut acc = x[i];
            for j in i.saturating_sub(kl + ku)..i {
                acc -= self.at(j, i).conjugate() * x[j];
            }
            x[i] = acc / self.at(i, i).conjugate();
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                acc -= self.at(i, k).conjugate() * x[i];
            }
            x[k] = acc;
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// `(X + X^T) / 2`
pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest eigenvalue of a symmetric matrix; `-inf` for an empty one.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Block diagonal `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(n + m, a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((n, a.ncols()), b.shape()).copy_from(b);
    out
}
