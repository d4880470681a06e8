//! Small dense linear algebra and graph utilities.
//!
//! Everything here is desk-scale (n up to a couple hundred) and deterministic:
//! row-major dense storage, Gaussian elimination with partial pivoting, a cyclic
//! Jacobi eigensolver for symmetric matrices, and reachability/period checks on
//! boolean adjacency matrices. Tolerances are absolute-plus-relative throughout
//! so results are insensitive to the scale of the data.

use crate::{Error, Result};

/// Entries of a nonnegative matrix strictly above this count as graph edges;
/// anything at or below is treated as a structural zero.
pub const EDGE_THRESHOLD: f64 = 1e-12;

/// Pivot magnitudes below this (after pivot selection) are treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Row sums of a stochastic matrix may deviate from one by at most this much.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Dense row-major matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix. Dimensions must be positive.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from nested rows, validating shape and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidModel(
                "matrix dimensions must be positive".into(),
            ));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidModel(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "non-finite entry at [{i},{j}]"
                    )));
                }
                data.push(x);
            }
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Matrix-vector product `A x`.
    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in mat_vec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn mat_mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mat_mul");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.set(i, j, out.get(i, j) + a * other.get(k, j));
                }
            }
        }
        out
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Largest magnitude of `self[i,j] - self[j,i]` over all pairs.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Row-stochastic square matrix, validated on construction: nonnegative entries
/// and row sums within [`ROW_SUM_TOL`] of one.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    inner: Matrix,
}

impl StochasticMatrix {
    pub fn new(matrix: Matrix) -> Result<StochasticMatrix> {
        if !matrix.is_square() {
            return Err(Error::InvalidModel(format!(
                "stochastic matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for i in 0..matrix.rows() {
            let mut sum = 0.0;
            for j in 0..matrix.cols() {
                let x = matrix.get(i, j);
                if !(x >= -1e-15) || !x.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "stochastic matrix entry [{i},{j}] = {x} is negative or non-finite"
                    )));
                }
                sum += x;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "row {i} sums to {sum:.17}, off by {:.3e}",
                    (sum - 1.0).abs()
                )));
            }
        }
        Ok(StochasticMatrix { inner: matrix })
    }

    /// Wraps a matrix without validation. Intended for the documented fault
    /// injection hook, which deliberately breaks row stochasticity.
    pub fn new_unchecked(matrix: Matrix) -> StochasticMatrix {
        StochasticMatrix { inner: matrix }
    }

    pub fn n(&self) -> usize {
        self.inner.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.inner.row(i)
    }

    /// `M x` (acts on column vectors).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.inner.mat_vec(x)
    }

    /// `p^T M` (acts on row vectors / distributions).
    pub fn left_apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(p.len(), n, "dimension mismatch in left_apply");
        let mut out = vec![0.0; n];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += pi * self.get(i, j);
            }
        }
        out
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.n()).fold(f64::INFINITY, |acc, i| acc.min(self.get(i, i)))
    }

    /// Boolean adjacency with edges where entries exceed [`EDGE_THRESHOLD`].
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j) > EDGE_THRESHOLD).collect())
            .collect()
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// Fails with [`Error::SingularMatrix`] if the best available pivot has
/// magnitude below [`PIVOT_FLOOR`].
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    assert!(a.is_square(), "solve_linear requires a square matrix");
    let n = a.rows();
    assert_eq!(b.len(), n, "dimension mismatch in solve_linear");

    let mut work = a.clone();
    let mut rhs = b.to_vec();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| work.get(r, col).abs().total_cmp(&work.get(s, col).abs()))
            .expect("non-empty pivot range");
        let pivot = work.get(pivot_row, col);
        if pivot.abs() < PIVOT_FLOOR {
            return Err(Error::SingularMatrix {
                col,
                pivot: pivot.abs(),
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = work.get(col, j);
                work.set(col, j, work.get(pivot_row, j));
                work.set(pivot_row, j, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        for r in (col + 1)..n {
            let factor = work.get(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            work.set(r, col, 0.0);
            for j in (col + 1)..n {
                work.set(r, j, work.get(r, j) - factor * work.get(col, j));
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in (i + 1)..n {
            acc -= work.get(i, j) * x[j];
        }
        x[i] = acc / work.get(i, i);
    }
    Ok(x)
}

/// Full spectrum of a symmetric matrix: eigenvalues ascending, eigenvectors as
/// orthonormal columns in matching order.
#[derive(Debug, Clone)]
pub struct SymEigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

/// One Jacobi rotation annihilating `a[p][q]`, accumulated into `v`.
fn jacobi_rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let n = a.rows();
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = 0.5 * (aqq - app) / apq;
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let sn = t * c;
    let tau = sn / (1.0 + c);

    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = akp - sn * (akq + tau * akp);
        let new_kq = akq + sn * (akp - tau * akq);
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp - sn * (vkq + tau * vkp));
        v.set(k, q, vkq + sn * (vkp - tau * vkq));
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Requires `max |S[i,j] - S[j,i]| <= 1e-10`; iterates plane rotations until the
/// largest off-diagonal magnitude falls below `1e-12 * (1 + max|S|)`, with a hard
/// bound of [`MAX_JACOBI_SWEEPS`] sweeps. A few refinement sweeps then continue
/// against a relative per-entry criterion `|a_pq| <= 1e-15 sqrt(|a_pp a_qq|)`,
/// which keeps small eigenvalues of badly scaled matrices (diagonal scalings of
/// well-behaved ones, like the weighted Laplacian transforms used here)
/// accurate in relative rather than just absolute terms.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigenResult> {
    assert!(s.is_square(), "sym_eigen requires a square matrix");
    let asymmetry = s.asymmetry();
    if asymmetry > 1e-10 {
        return Err(Error::NotSymmetric { asymmetry });
    }

    let n = s.rows();
    let scale = s.max_abs();
    let off_tol = 1e-12 * (1.0 + scale);

    // Work on the symmetrized copy so tiny asymmetries cannot bias rotations.
    let mut a = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (s.get(i, j) + s.get(j, i));
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }
    let mut v = Matrix::identity(n);

    if n > 1 {
        let mut converged = false;
        let mut last_off = 0.0;
        for _sweep in 0..MAX_JACOBI_SWEEPS {
            let mut max_off = 0.0_f64;
            for p in 0..(n - 1) {
                for q in (p + 1)..n {
                    max_off = max_off.max(a.get(p, q).abs());
                }
            }
            last_off = max_off;
            if max_off <= off_tol {
                converged = true;
                break;
            }
            for p in 0..(n - 1) {
                for q in (p + 1)..n {
                    if a.get(p, q).abs() > off_tol * 1e-2 {
                        jacobi_rotate(&mut a, &mut v, p, q);
                    }
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                sweeps: MAX_JACOBI_SWEEPS,
                off_diag: last_off,
            });
        }

        // Refinement: drive each off-diagonal under a relative threshold so
        // small eigenvalues stay accurate when the matrix is badly scaled.
        let abs_floor = 1e-30 * (1.0 + scale);
        for _ in 0..4 {
            let mut dirty = false;
            for p in 0..(n - 1) {
                for q in (p + 1)..n {
                    let apq = a.get(p, q).abs();
                    let rel = 1e-15 * (a.get(p, p).abs() * a.get(q, q).abs()).sqrt();
                    if apq > rel.max(abs_floor) {
                        jacobi_rotate(&mut a, &mut v, p, q);
                        dirty = true;
                    }
                }
            }
            if !dirty {
                break;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors.set(k, new_col, v.get(k, old_col));
        }
    }
    Ok(SymEigenResult {
        eigenvalues,
        eigenvectors,
    })
}

fn reachable_count(adj: &[Vec<bool>], reversed: bool) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0);
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let edge = if reversed { adj[v][u] } else { adj[u][v] };
            if edge && !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// True iff every node can reach every node along directed edges.
pub fn strongly_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    assert!(
        n > 0 && adj.iter().all(|r| r.len() == n),
        "adjacency must be square"
    );
    reachable_count(adj, false) == n && reachable_count(adj, true) == n
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected directed graph: the gcd of all directed cycle
/// lengths, computed from BFS-level differences. A result of 1 means aperiodic.
///
/// Fails with [`Error::NotIrreducible`] if the graph is not strongly connected
/// (including the degenerate single node without a self-loop, which has no
/// cycles at all).
pub fn chain_period(adj: &[Vec<bool>]) -> Result<usize> {
    if !strongly_connected(adj) {
        return Err(Error::NotIrreducible);
    }
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[0] = 0;
    queue.push_back(0);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if adj[u][v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for u in 0..n {
        for v in 0..n {
            if adj[u][v] {
                g = gcd(g, dist[u] + 1 - dist[v]);
            }
        }
    }
    if g == 0 {
        // No cycle through the root; only possible without edges.
        return Err(Error::NotIrreducible);
    }
    Ok(g)
}
