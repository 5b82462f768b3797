//! Dense linear algebra used by every other module.
//!
//! Deliberately desk-scale and dependency-free: cyclic Jacobi for the
//! symmetric eigenproblem, Cholesky for SPD solves, Householder QR with
//! column pivoting for rank and null-space questions. Orders stay well
//! below ~100 in this toolkit, so the simple O(n^3) dense routines are
//! both fast enough and accurate.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Max-absolute-value norm; 0 for an empty slice.
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += s * x`.
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Dense rectangular matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row slices; every row must have equal length.
    /// An empty row list yields a 0 x `cols` matrix.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "row length mismatch");
            data.extend_from_slice(r);
        }
        Mat { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `A^T x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(&mut out, x[i], self.row(i));
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks `self` on top of `other` (column counts must agree).
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat { rows: self.rows + other.rows, cols: self.cols, data }
    }
}

/// Dense symmetric matrix. Full row-major storage, but the only write path
/// (`set`) mirrors into both triangles, so `get(i, j) == get(j, i)` holds
/// exactly at all times.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "SymMatrix order must be at least 1");
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    /// Builds from `f(i, j)`; `f` is consulted only for `i <= j` and the
    /// value is mirrored, so symmetry is exact regardless of `f`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Writes both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add_assign_scaled(&mut self, other: &SymMatrix, s: f64) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// `self += s I`.
    pub fn add_diag(&mut self, s: f64) {
        for i in 0..self.n {
            let v = self.get(i, i) + s;
            self.set(i, i, v);
        }
    }

    /// `self += s v v^T`.
    pub fn rank_one_update(&mut self, v: &[f64], s: f64) {
        assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let val = self.get(i, j) + s * v[i] * v[j];
                self.set(i, j, val);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    pub fn quadratic_form(&self, d: &[f64]) -> f64 {
        dot(d, &self.matvec(d))
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Congruence transform `A^T V A` for `A` of shape `k x n`, `V` of
    /// order `k`. The result is symmetrized entry-by-entry so the storage
    /// invariant holds exactly.
    pub fn congruence(v: &SymMatrix, a: &Mat) -> SymMatrix {
        assert_eq!(v.n, a.rows());
        let n = a.cols();
        let k = a.rows();
        // W = V A (k x n)
        let mut w = Mat::zeros(k, n);
        for i in 0..k {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..k {
                    s += v.get(i, l) * a.get(l, j);
                }
                w.set(i, j, s);
            }
        }
        SymMatrix::from_fn(n, |i, j| {
            let mut s = 0.0;
            for l in 0..k {
                s += a.get(l, i) * w.get(l, j);
            }
            s
        })
    }

    /// `A^T A` for `A` of shape `k x n`.
    pub fn gram(a: &Mat) -> SymMatrix {
        let n = a.cols();
        SymMatrix::from_fn(n, |i, j| {
            let mut s = 0.0;
            for l in 0..a.rows() {
                s += a.get(l, i) * a.get(l, j);
            }
            s
        })
    }
}

/// Full spectrum of a symmetric matrix: eigenvalues ascending, eigenvector
/// columns orthonormal.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl EigenResult {
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|i| self.vectors.get(i, j)).collect()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenResult, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.order();
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    let scale = 1.0 + a.frobenius();
    let tol = 1e-15 * scale;

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(w.get(p, q).abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq.abs() <= 0.1 * tol {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Row/column rotation on the working copy.
                for k in 0..n {
                    if k != p && k != q {
                        let akp = w.get(k, p);
                        let akq = w.get(k, q);
                        w.set(k, p, c * akp - s * akq);
                        w.set(k, q, s * akp + c * akq);
                    }
                }
                w.set(p, p, app - t * apq);
                w.set(q, q, aqq + t * apq);
                w.set(p, q, 0.0);

                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (jn, &jo) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, jn, v.get(i, jo));
        }
    }
    Ok(EigenResult { values, vectors })
}

/// Smallest eigenvalue; equals `sym_eigen(a).values[0]`.
pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64, LinalgError> {
    Ok(sym_eigen(a)?.values[0])
}

/// Largest eigenvalue.
pub fn max_eigenvalue(a: &SymMatrix) -> Result<f64, LinalgError> {
    Ok(*sym_eigen(a)?.values.last().unwrap())
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
/// A non-positive pivot reports `NotPositiveDefinite`; callers typically
/// regularize and retry.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.order();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve_spd: matrix order {n}, rhs length {}",
            b.len()
        )));
    }
    if !a.is_finite() || !b.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    // Lower-triangular factor, row-major.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite { index: i, pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// Orthonormal basis of the kernel of a stacked-row matrix.
#[derive(Debug, Clone)]
pub struct NullSpaceBasis {
    /// Ambient dimension n.
    pub dim: usize,
    /// n x nullity matrix whose columns span ker(A).
    pub basis: Mat,
    /// Numerical rank of the row set.
    pub rank: usize,
    /// Rank tolerance that was used.
    pub tol: f64,
}

impl NullSpaceBasis {
    pub fn nullity(&self) -> usize {
        self.basis.cols()
    }
}

/// Default rank tolerance: `1e-8 * max row norm` (1e-8 when all rows vanish).
pub fn default_rank_tol(rows: &Mat) -> f64 {
    let mut m = 0.0f64;
    for i in 0..rows.rows() {
        m = m.max(norm(rows.row(i)));
    }
    1e-8 * m.max(1.0)
}

/// Null space of `rows` (a k x n stacked-row matrix) via Householder QR
/// with column pivoting applied to `rows^T`. An empty row set yields the
/// full identity basis with rank 0.
pub fn null_space(rows: &Mat, tol_rank: f64) -> NullSpaceBasis {
    assert!(tol_rank > 0.0, "tol_rank must be positive");
    let n = rows.cols();
    let k = rows.rows();
    if k == 0 || rows.frobenius() == 0.0 {
        return NullSpaceBasis { dim: n, basis: Mat::identity(n), rank: 0, tol: tol_rank };
    }

    // B = rows^T, n x k. Householder QR with column pivoting: B P = Q R.
    let mut b = rows.transpose();
    let steps = n.min(k);
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let mut rank = 0usize;
    let threshold = tol_rank * rows.frobenius().max(1e-300);

    for j in 0..steps {
        // Pivot: remaining column with the largest trailing norm.
        let mut best = j;
        let mut best_norm = -1.0f64;
        for c in j..k {
            let cn: f64 = (j..n).map(|r| b.get(r, c).powi(2)).sum::<f64>().sqrt();
            if cn > best_norm {
                best_norm = cn;
                best = c;
            }
        }
        if best_norm <= threshold {
            break;
        }
        if best != j {
            for r in 0..n {
                let t = b.get(r, j);
                b.set(r, j, b.get(r, best));
                b.set(r, best, t);
            }
        }

        // Householder vector for column j, rows j..n.
        let mut v: Vec<f64> = (j..n).map(|r| b.get(r, j)).collect();
        let alpha = -v[0].signum() * norm(&v);
        v[0] -= alpha;
        let vnorm = norm(&v);
        if vnorm <= 0.0 {
            rank += 1;
            reflectors.push(vec![0.0; n - j]);
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        // Apply H = I - 2 v v^T to the trailing columns.
        for c in j..k {
            let mut s = 0.0;
            for (idx, r) in (j..n).enumerate() {
                s += v[idx] * b.get(r, c);
            }
            for (idx, r) in (j..n).enumerate() {
                let t = b.get(r, c) - 2.0 * s * v[idx];
                b.set(r, c, t);
            }
        }
        reflectors.push(v);
        rank += 1;
    }

    // Null space = trailing columns of Q; build them by applying stored
    // reflectors (in reverse) to identity columns rank..n.
    let nullity = n - rank;
    let mut basis = Mat::zeros(n, nullity);
    for (cj, col) in (rank..n).enumerate() {
        let mut e = vec![0.0f64; n];
        e[col] = 1.0;
        for (j, v) in reflectors.iter().enumerate().rev() {
            if v.iter().all(|x| *x == 0.0) {
                continue;
            }
            let mut s = 0.0;
            for (idx, r) in (j..n).enumerate() {
                s += v[idx] * e[r];
            }
            for (idx, r) in (j..n).enumerate() {
                e[r] -= 2.0 * s * v[idx];
            }
        }
        for r in 0..n {
            basis.set(r, cj, e[r]);
        }
    }
    NullSpaceBasis { dim: n, basis, rank, tol: tol_rank }
}
