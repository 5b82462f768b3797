//! Second-order cone geometry and the semismooth calculus of the metric
//! projection: spectral decompositions, the projection itself, the Jordan
//! product, the reflection matrix, the M(xi, w) family and B-subdifferential
//! selections.
//!
//! Blocks of dimension 1 are ordinary nonnegativity constraints and bypass
//! the spectral machinery entirely: projection is `max(0, z)`, the
//! B-subdifferential lives in {0, 1} and the reflection matrix is `[1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm, SymMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum SocError {
    #[error("direction must be a unit vector (norm {0:.3e})")]
    NonUnitDirection(f64),
    #[error("block dimension mismatch: {0}")]
    BlockMismatch(String),
}

/// Cartesian product of Lorentz cones, described by its block dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeProduct {
    dims: Vec<usize>,
}

impl ConeProduct {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty(), "a cone product needs at least one block");
        assert!(dims.iter().all(|&m| m >= 1), "every block dimension must be >= 1");
        ConeProduct { dims }
    }

    pub fn block_count(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.dims[..i].iter().sum()
    }
}

/// Flat vector partitioned by a `ConeProduct`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    cone: ConeProduct,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn new(cone: ConeProduct, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), cone.total_dim(), "length must match the cone product");
        BlockVector { cone, data }
    }

    pub fn zeros(cone: ConeProduct) -> Self {
        let n = cone.total_dim();
        BlockVector { cone, data: vec![0.0; n] }
    }

    pub fn cone(&self) -> &ConeProduct {
        &self.cone
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let o = self.cone.offset(i);
        &self.data[o..o + self.cone.block_dim(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let o = self.cone.offset(i);
        let m = self.cone.block_dim(i);
        &mut self.data[o..o + m]
    }

    /// Head component `[v_i]_0` of block `i`.
    pub fn head(&self, i: usize) -> f64 {
        self.block(i)[0]
    }

    /// Tail `\bar v_i` of block `i` (empty for scalar blocks).
    pub fn tail(&self, i: usize) -> &[f64] {
        &self.block(i)[1..]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// True when every block satisfies `eta_1 >= -tol`.
    pub fn in_cone(&self, tol: f64) -> bool {
        (0..self.cone.block_count()).all(|i| {
            let z = self.block(i);
            if z.len() == 1 {
                z[0] >= -tol
            } else {
                z[0] - norm(&z[1..]) >= -tol
            }
        })
    }
}

/// Spectral decomposition of a block: `z = eta1 u1 + eta2 u2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eta1: f64,
    pub eta2: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Set when the tail vanished and the tie-break direction was used.
    pub degenerate_tail: bool,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        self.u1
            .iter()
            .zip(&self.u2)
            .map(|(a, b)| self.eta1 * a + self.eta2 * b)
            .collect()
    }
}

/// Region of a point relative to the cone K and its negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeRegion {
    InteriorK,
    BoundaryPlusK,
    InteriorNegK,
    BoundaryPlusNegK,
    Outside,
    Zero,
}

/// Spectral decomposition of a single block of dimension >= 2. When the
/// tail vanishes, `tie_dir` (default: first coordinate unit vector) fixes
/// the eigenvector pair; any unit tail direction is admissible.
pub fn spectral_decompose(z: &[f64], tie_dir: Option<&[f64]>) -> SpectralDecomposition {
    assert!(z.len() >= 2, "spectral decomposition needs block dimension >= 2");
    let m = z.len();
    let tail = &z[1..];
    let tail_norm = norm(tail);
    let eta1 = z[0] - tail_norm;
    let eta2 = z[0] + tail_norm;
    let (dir, degenerate): (Vec<f64>, bool) = if tail_norm > 0.0 {
        (tail.iter().map(|t| t / tail_norm).collect(), false)
    } else {
        let d = match tie_dir {
            Some(d) => {
                assert_eq!(d.len(), m - 1, "tie-break direction has wrong dimension");
                d.to_vec()
            }
            None => {
                let mut d = vec![0.0; m - 1];
                d[0] = 1.0;
                d
            }
        };
        (d, true)
    };
    let mut u1 = Vec::with_capacity(m);
    let mut u2 = Vec::with_capacity(m);
    u1.push(0.5);
    u2.push(0.5);
    for d in &dir {
        u1.push(-0.5 * d);
        u2.push(0.5 * d);
    }
    SpectralDecomposition { eta1, eta2, u1, u2, degenerate_tail: degenerate }
}

/// Projection of one block onto its Lorentz cone: clamp both spectral
/// values at zero and reconstruct. Scalar blocks project to `max(0, z)`.
pub fn project_block(z: &[f64]) -> Vec<f64> {
    if z.len() == 1 {
        return vec![z[0].max(0.0)];
    }
    let sd = spectral_decompose(z, None);
    let a = sd.eta1.max(0.0);
    let b = sd.eta2.max(0.0);
    sd.u1.iter().zip(&sd.u2).map(|(u, v)| a * u + b * v).collect()
}

/// Blockwise projection onto the cone product.
pub fn project_cone(v: &BlockVector) -> BlockVector {
    let mut out = BlockVector::zeros(v.cone().clone());
    for i in 0..v.cone().block_count() {
        let p = project_block(v.block(i));
        out.block_mut(i).copy_from_slice(&p);
    }
    out
}

/// Jordan product of two vectors of the same block dimension:
/// `(⟨x, y⟩, x0 ȳ + y0 x̄)`. For scalar blocks this is plain multiplication.
pub fn jordan_product(x: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "jordan product needs equal block dimensions");
    let mut out = Vec::with_capacity(x.len());
    out.push(dot(x, y));
    for i in 1..x.len() {
        out.push(x[0] * y[i] + y[0] * x[i]);
    }
    out
}

/// Reflection matrix diag(1, -1, ..., -1).
pub fn gamma_matrix(m: usize) -> SymMatrix {
    assert!(m >= 1);
    let mut g = SymMatrix::zeros(m);
    g.set(0, 0, 1.0);
    for i in 1..m {
        g.set(i, i, -1.0);
    }
    g
}

/// `g̃(v) := (‖v̄‖, v̄)` — head replaced by the tail norm.
pub fn tilde_g(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out[0] = norm(&v[1..]);
    out
}

/// The matrix `M(xi, w) = (1/2) [[1, w^T], [w, (1+xi) I - xi w w^T]]` for a
/// unit vector `w` of dimension m-1. Rejects non-unit `w`; eigenvalue
/// guarantees additionally need `|xi| <= 1`.
pub fn m_matrix(xi: f64, w: &[f64]) -> Result<SymMatrix, SocError> {
    let wn = norm(w);
    if (wn - 1.0).abs() > 1e-10 {
        return Err(SocError::NonUnitDirection(wn));
    }
    let m = w.len() + 1;
    Ok(SymMatrix::from_fn(m, |i, j| {
        let v = match (i, j) {
            (0, 0) => 1.0,
            (0, c) => w[c - 1],
            (r, c) => {
                (if r == c { 1.0 + xi } else { 0.0 }) - xi * w[r - 1] * w[c - 1]
            }
        };
        0.5 * v
    }))
}

/// Classifies a block relative to K and -K at the given tolerance.
pub fn classify(z: &[f64], tol: f64) -> ConeRegion {
    assert!(tol > 0.0);
    if norm(z) <= tol {
        return ConeRegion::Zero;
    }
    if z.len() == 1 {
        // The scalar cone's boundary is the origin, already handled above.
        return if z[0] > 0.0 { ConeRegion::InteriorK } else { ConeRegion::InteriorNegK };
    }
    let tail_norm = norm(&z[1..]);
    let eta1 = z[0] - tail_norm;
    let eta2 = z[0] + tail_norm;
    if eta1 > tol {
        ConeRegion::InteriorK
    } else if eta2 < -tol {
        ConeRegion::InteriorNegK
    } else if eta1.abs() <= tol && eta2 > tol {
        ConeRegion::BoundaryPlusK
    } else if eta2.abs() <= tol && eta1 < -tol {
        ConeRegion::BoundaryPlusNegK
    } else {
        ConeRegion::Outside
    }
}

/// One element of the B-subdifferential of the projection at `z`.
///
/// Where the subdifferential is a singleton the element is forced:
/// 0 on int(-K), I on int(K), `M(z0/‖z̄‖, z̄/‖z̄‖)` outside both cones. On
/// the set-valued boundary cases the selection is fixed to I at bd+(K) and
/// at the origin, 0 at bd+(-K).
pub fn bsub_element(z: &[f64], tol: f64) -> SymMatrix {
    let m = z.len();
    match classify(z, tol) {
        ConeRegion::InteriorK | ConeRegion::BoundaryPlusK | ConeRegion::Zero => {
            SymMatrix::identity(m)
        }
        ConeRegion::InteriorNegK | ConeRegion::BoundaryPlusNegK => SymMatrix::zeros(m),
        ConeRegion::Outside => {
            // Outside implies a nonzero tail (and m >= 2).
            let tail_norm = norm(&z[1..]);
            let w: Vec<f64> = z[1..].iter().map(|t| t / tail_norm).collect();
            m_matrix(z[0] / tail_norm, &w).expect("normalized direction is unit")
        }
    }
}

/// Generalized-Jacobian selection for the composite `x -> Pi(-g(x))` used
/// by penalty-type surrogate Hessians, written directly in terms of the
/// region of `g`:
///
/// * `g` strictly inside K: 0;
/// * `-g` in K (boundary included, origin included): identity;
/// * otherwise (`g` on bd+(K) or outside both cones):
///   `M(-g0/‖ḡ‖, -ḡ/‖ḡ‖)`.
///
/// Every entry is an element of the projection's B-subdifferential at
/// `-g`; the only difference from `bsub_element(-g)` is the boundary
/// bd+(K) of `g`, where the M-matrix member is taken instead of 0.
pub fn penalty_jacobian_selection(g: &[f64], tol: f64) -> SymMatrix {
    let m = g.len();
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    match classify(&neg, tol) {
        ConeRegion::InteriorK | ConeRegion::BoundaryPlusK | ConeRegion::Zero => {
            SymMatrix::identity(m)
        }
        ConeRegion::InteriorNegK => SymMatrix::zeros(m),
        ConeRegion::BoundaryPlusNegK | ConeRegion::Outside => {
            let tail_norm = norm(&g[1..]);
            debug_assert!(tail_norm > 0.0, "these regions force a nonzero tail");
            let w: Vec<f64> = g[1..].iter().map(|t| -t / tail_norm).collect();
            m_matrix(-g[0] / tail_norm, &w).expect("normalized direction is unit")
        }
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn projection_nonexpansive(
            z1 in proptest::collection::vec(-10.0f64..10.0, 2..6),
            z2 in proptest::collection::vec(-10.0f64..10.0, 2..6),
        ) {
            let m = z1.len().min(z2.len());
            let a = &z1[..m];
            let b = &z2[..m];
            let pa = project_block(a);
            let pb = project_block(b);
            let dp: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let dz: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dp <= dz + 1e-12);
        }

        #[test]
        fn jordan_trace_identity(
            x in proptest::collection::vec(-10.0f64..10.0, 1..6),
            y in proptest::collection::vec(-10.0f64..10.0, 1..6),
        ) {
            let m = x.len().min(y.len());
            let p = jordan_product(&x[..m], &y[..m]);
            prop_assert_eq!(p[0], crate::linalg::dot(&x[..m], &y[..m]));
        }
    }
}
