//! Optimality-condition machinery: index sets, the sigma-term, first- and
//! second-order residuals, explicit certifying parameters for penalty-type
//! sequences, WSONC and Robinson-CQ diagnostics, a constant-rank probe and
//! the quartic-penalty path generator.

mod certificate;
mod penalty_path;

pub use certificate::{
    certify_iterate, certify_iterate_local_sets, Akkt2Certificate, Akkt2Params, CertRow,
};
pub use penalty_path::{penalty_path, PenaltyPathOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    default_rank_tol, dot, max_eigenvalue, min_eigenvalue, norm, null_space, LinalgError, Mat,
    NullSpaceBasis, SymMatrix,
};
use crate::model::{ModelError, Problem};
use crate::soc::{
    bsub_element, classify, gamma_matrix, jordan_product, project_cone, tilde_g, BlockVector,
    ConeRegion,
};
use crate::subqp::{solve_conic_feasibility, ConicFeasibilityProblem, SubQpError};

#[derive(Debug, Error)]
pub enum ConditionsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    SubQp(#[from] SubQpError),
    #[error("block {index}: {reason}")]
    InvalidBlock { index: usize, reason: String },
    #[error("hint point is not feasible (r_V = {r_v:.3e}, required <= {required:.1e})")]
    InfeasibleHint { r_v: f64, required: f64 },
}

/// Exact and tolerance-relaxed active index sets at a point.
///
/// The exact triple partitions all blocks. Infeasible blocks (outside both
/// cones with a nonpositive head, or on the negative side) are assigned to
/// `zero`: along a certifying sequence they can only converge to an active
/// limit. Outside blocks with a positive head go to `boundary`. Scalar
/// blocks never enter the boundary sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSets {
    pub zero: Vec<usize>,
    pub boundary: Vec<usize>,
    pub interior: Vec<usize>,
    pub eps_zero: Vec<usize>,
    pub eps_boundary: Vec<usize>,
    pub eps_bb: Vec<usize>,
    pub tol_exact: f64,
    pub tol_relaxed: f64,
}

/// Computes the index sets of `g(x)`. `omega` is only needed for the
/// doubly-relaxed boundary set (`eps_bb`); it is empty when absent.
pub fn index_sets(
    problem: &Problem,
    x: &[f64],
    eps_exact: f64,
    eps_relaxed: f64,
    omega: Option<&BlockVector>,
) -> IndexSets {
    assert!(eps_exact > 0.0 && eps_relaxed > 0.0);
    let g = problem.cone_values(x);
    let r = problem.cone().block_count();
    let mut sets = IndexSets {
        zero: Vec::new(),
        boundary: Vec::new(),
        interior: Vec::new(),
        eps_zero: Vec::new(),
        eps_boundary: Vec::new(),
        eps_bb: Vec::new(),
        tol_exact: eps_exact,
        tol_relaxed: eps_relaxed,
    };
    for i in 0..r {
        let gi = g.block(i);
        let m = gi.len();
        if norm(gi) <= eps_exact {
            sets.zero.push(i);
        } else if m == 1 {
            if gi[0] > eps_exact {
                sets.interior.push(i);
            } else {
                sets.zero.push(i);
            }
        } else {
            match classify(gi, eps_exact) {
                ConeRegion::Zero => sets.zero.push(i),
                ConeRegion::InteriorK => sets.interior.push(i),
                ConeRegion::BoundaryPlusK => sets.boundary.push(i),
                ConeRegion::Outside => {
                    if gi[0] > eps_exact {
                        sets.boundary.push(i);
                    } else {
                        sets.zero.push(i);
                    }
                }
                ConeRegion::InteriorNegK | ConeRegion::BoundaryPlusNegK => sets.zero.push(i),
            }
        }

        if norm(gi) <= eps_relaxed {
            sets.eps_zero.push(i);
        }
        if m >= 2 {
            let head = gi[0];
            let tail = norm(&gi[1..]);
            if (head - tail).abs() <= eps_relaxed && head > 0.0 {
                sets.eps_boundary.push(i);
                if let Some(om) = omega {
                    let oi = om.block(i);
                    let ohead = oi[0];
                    let otail = norm(&oi[1..]);
                    if (ohead - otail).abs() <= eps_relaxed && ohead > 0.0 {
                        sets.eps_bb.push(i);
                    }
                }
            }
        }
    }
    sets
}

/// Sigma-term `sum_{i in activeB} -([omega_i]_0/[g_i(x)]_0) Dg_i^T Gamma_i Dg_i`,
/// the cone-curvature contribution absent in nonlinear programming.
pub fn sigma_term(
    problem: &Problem,
    x: &[f64],
    omega: &BlockVector,
    active_boundary: &[usize],
) -> Result<SymMatrix, ConditionsError> {
    let n = problem.dim();
    let g = problem.cone_values(x);
    let mut sigma = SymMatrix::zeros(n);
    for &i in active_boundary {
        let head = g.head(i);
        if head == 0.0 || !head.is_finite() {
            return Err(ConditionsError::InvalidBlock {
                index: i,
                reason: format!("sigma-term needs a nonzero block head, got {head}"),
            });
        }
        let m = problem.cone().block_dim(i);
        let dgi = problem.cone_block_jacobian(i, x);
        let gamma = gamma_matrix(m);
        let congr = SymMatrix::congruence(&gamma, &dgi);
        sigma.add_assign_scaled(&congr, -omega.head(i) / head);
    }
    Ok(sigma)
}

/// First-order residual bundle at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderResiduals {
    /// ||grad_x L(x, mu, omega)||.
    pub stationarity: f64,
    /// r_V(x) = ||h(x)|| + ||Pi_K(-g(x))||.
    pub feasibility: f64,
    /// max_i |<g_i(x), omega_i>|.
    pub akkt_complementarity: f64,
    /// max over blockwise ||g_i o omega_i|| and |h_i mu_i|.
    pub cakkt_complementarity: f64,
}

impl FirstOrderResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.akkt_complementarity)
            .max(self.cakkt_complementarity)
    }
}

pub fn first_order_residuals(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
) -> Result<FirstOrderResiduals, ConditionsError> {
    let data = problem.eval_lagrangian_data(x, mu, omega)?;
    let stationarity = norm(&data.grad_l);

    let neg_g = BlockVector::new(
        problem.cone().clone(),
        data.g.as_slice().iter().map(|v| -v).collect(),
    );
    let feasibility = norm(&data.h) + project_cone(&neg_g).norm();

    let mut akkt = 0.0f64;
    let mut cakkt = 0.0f64;
    for i in 0..problem.cone().block_count() {
        let gi = data.g.block(i);
        let oi = omega.block(i);
        akkt = akkt.max(dot(gi, oi).abs());
        cakkt = cakkt.max(norm(&jordan_product(gi, oi)));
    }
    for (hi, mi) in data.h.iter().zip(mu) {
        cakkt = cakkt.max((hi * mi).abs());
    }
    Ok(FirstOrderResiduals {
        stationarity,
        feasibility,
        akkt_complementarity: akkt,
        cakkt_complementarity: cakkt,
    })
}

/// Boundary multiplier control for sequence checks: over the
/// boundary-active blocks, the smaller of the multiplier norm ("omega
/// tends to zero") and the ray misalignment
/// `‖ omega-bar/‖omega-bar‖ + g-bar/‖g-bar‖ ‖` ("omega on the opposing
/// boundary ray"). Either route certifies the limit condition, so the
/// smaller one counts.
pub fn akkt_ray_control(problem: &Problem, x: &[f64], omega: &BlockVector) -> f64 {
    let sets = index_sets(problem, x, 1e-8, 1e-8, Some(omega));
    let g = problem.cone_values(x);
    let mut worst = 0.0f64;
    for &i in &sets.boundary {
        let oi = omega.block(i);
        let gi = g.block(i);
        let omega_norm = norm(oi);
        let otail = norm(&oi[1..]);
        let gtail = norm(&gi[1..]);
        let term = if otail > 1e-12 && gtail > 1e-12 {
            let mis: f64 = oi[1..]
                .iter()
                .zip(&gi[1..])
                .map(|(o, gv)| {
                    let d = o / otail + gv / gtail;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            omega_norm.min(mis)
        } else {
            omega_norm
        };
        worst = worst.max(term);
    }
    worst
}

/// Feasibility residual r_V alone.
pub fn feasibility_residual(problem: &Problem, x: &[f64]) -> f64 {
    let g = problem.cone_values(x);
    let neg_g = BlockVector::new(
        problem.cone().clone(),
        g.as_slice().iter().map(|v| -v).collect(),
    );
    norm(&problem.equality_values(x)) + project_cone(&neg_g).norm()
}

/// Assembles the second-order certificate matrix
///
/// ```text
/// hess_L + sigma + sum_i eta_i grad h_i grad h_i^T
///        + sum_{i in boundary} gamma_i (Dg_i^T Gamma g~_i)(Dg_i^T Gamma g~_i)^T
///        + sum_{i in zero} theta_i Dg_i^T Dg_i
///        + delta I
/// ```
pub fn akkt2_matrix(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
    params: &Akkt2Params,
    sets: &IndexSets,
) -> Result<SymMatrix, ConditionsError> {
    let data = problem.eval_lagrangian_data(x, mu, omega)?;
    let mut a = data.hess_l.clone();
    a.add_assign_scaled(&sigma_term(problem, x, omega, &sets.boundary)?, 1.0);

    for (i, eta_i) in params.eta.iter().enumerate() {
        if *eta_i != 0.0 {
            a.rank_one_update(data.dh.row(i), *eta_i);
        }
    }
    for &i in &sets.boundary {
        let gamma_i = params.gamma_of(i);
        if gamma_i != 0.0 {
            let v = boundary_constraint_row(problem, x, i);
            a.rank_one_update(&v, gamma_i);
        }
    }
    for &i in &sets.zero {
        let theta_i = params.theta_of(i);
        if theta_i != 0.0 {
            let dgi = problem.cone_block_jacobian(i, x);
            a.add_assign_scaled(&SymMatrix::gram(&dgi), theta_i);
        }
    }
    a.add_diag(params.delta);
    Ok(a)
}

/// The column vector `Dg_i(x)^T Gamma_i g~_i(x)` that generates both the
/// boundary row of the WSONC subspace and the rank-one boundary term of
/// the second-order certificate matrix.
pub fn boundary_constraint_row(problem: &Problem, x: &[f64], i: usize) -> Vec<f64> {
    let g = problem.cone_values(x);
    let gi = g.block(i);
    let gt = tilde_g(gi);
    let gamma = gamma_matrix(gi.len());
    let refl = gamma.matvec(&gt);
    problem.cone_block_jacobian(i, x).tr_matvec(&refl)
}

/// Explicit certifying parameter choice along penalty-type iterates: with
/// penalty weight `rho`,
///
/// * `theta_i = rho` on zero-active blocks,
/// * `gamma_i = rho [g_i]_0 / ‖ḡ_i‖^3` on boundary blocks at or outside
///   the boundary, 0 strictly inside,
/// * `phi_i = rho (‖ḡ_i‖ - [g_i]_0)^2 / ([g_i]_0 ‖ḡ_i‖)` on blocks outside
///   both cones, 0 otherwise,
/// * `delta = sum_i phi_i lambda_max(Dg_i^T Dg_i)`,
/// * `eta_i = rho` on every equality.
pub fn akkt2_penalty_params(
    problem: &Problem,
    x: &[f64],
    rho: f64,
    sets: &IndexSets,
) -> Result<Akkt2Params, ConditionsError> {
    assert!(rho > 0.0);
    let g = problem.cone_values(x);
    let mut params = Akkt2Params::zero(problem.equality_count());
    for e in params.eta.iter_mut() {
        *e = rho;
    }
    for &i in &sets.zero {
        params.theta.push((i, rho));
    }
    let mut delta = 0.0f64;
    for &i in &sets.boundary {
        let gi = g.block(i);
        let head = gi[0];
        let tail = norm(&gi[1..]);
        if tail == 0.0 {
            return Err(ConditionsError::InvalidBlock {
                index: i,
                reason: "boundary block has a vanishing tail".into(),
            });
        }
        let (gamma_i, phi_i) = match classify(gi, 1e-10) {
            ConeRegion::InteriorK => (0.0, 0.0),
            ConeRegion::BoundaryPlusK => (rho * head / tail.powi(3), 0.0),
            ConeRegion::Outside => {
                if head <= 0.0 {
                    return Err(ConditionsError::InvalidBlock {
                        index: i,
                        reason: "outside block with nonpositive head cannot be boundary-active"
                            .into(),
                    });
                }
                (
                    rho * head / tail.powi(3),
                    rho * (tail - head).powi(2) / (head * tail),
                )
            }
            other => {
                return Err(ConditionsError::InvalidBlock {
                    index: i,
                    reason: format!("region {other:?} is incompatible with a boundary block"),
                })
            }
        };
        if gamma_i != 0.0 {
            params.gamma.push((i, gamma_i));
        }
        if phi_i != 0.0 {
            params.phi.push((i, phi_i));
            let dgi = problem.cone_block_jacobian(i, x);
            delta += phi_i * max_eigenvalue(&SymMatrix::gram(&dgi))?;
        }
    }
    params.delta = delta;
    Ok(params)
}

/// The boundary-block matrix whose positive semidefiniteness carries the
/// second-order certificate for penalty iterates:
///
/// ```text
/// -rho V_i + gamma_i (Gamma g~_i)(Gamma g~_i)^T - ([omega_i]_0/[g_i]_0) Gamma_i + phi_i I
/// ```
///
/// with `V_i` the fixed B-subdifferential selection at `-g_i(x)` and
/// `gamma_i`, `phi_i` as in [`akkt2_penalty_params`]. Callers supply
/// `omega_i = rho Pi(-g_i(x))`.
pub fn penalty_boundary_block_matrix(
    problem: &Problem,
    x: &[f64],
    omega: &BlockVector,
    rho: f64,
    i: usize,
) -> Result<SymMatrix, ConditionsError> {
    let g = problem.cone_values(x);
    let gi = g.block(i);
    let m = gi.len();
    let head = gi[0];
    let tail = norm(&gi[1..]);
    if head == 0.0 || tail == 0.0 {
        return Err(ConditionsError::InvalidBlock {
            index: i,
            reason: "boundary-block matrix needs nonzero head and tail".into(),
        });
    }
    let (gamma_i, phi_i) = match classify(gi, 1e-10) {
        ConeRegion::InteriorK => (0.0, 0.0),
        ConeRegion::BoundaryPlusK => (rho * head / tail.powi(3), 0.0),
        ConeRegion::Outside => (
            rho * head / tail.powi(3),
            rho * (tail - head).powi(2) / (head * tail),
        ),
        other => {
            return Err(ConditionsError::InvalidBlock {
                index: i,
                reason: format!("region {other:?} is incompatible with a boundary block"),
            })
        }
    };
    let neg: Vec<f64> = gi.iter().map(|v| -v).collect();
    let v_sel = bsub_element(&neg, 1e-10);

    let mut a = SymMatrix::zeros(m);
    a.add_assign_scaled(&v_sel, -rho);
    let gt = tilde_g(gi);
    let gamma_mat = gamma_matrix(m);
    let refl = gamma_mat.matvec(&gt);
    a.rank_one_update(&refl, gamma_i);
    a.add_assign_scaled(&gamma_mat, -omega.head(i) / head);
    a.add_diag(phi_i);
    Ok(a)
}

/// Bordered Gram matrix `[[beta, b^T], [b, (1/beta) b b^T + xi I]]`;
/// positive semidefinite whenever `beta > 0` and `xi >= 0`, positive
/// definite when additionally `xi > 0`.
pub fn bordered_gram_matrix(beta: f64, xi: f64, b: &[f64]) -> SymMatrix {
    assert!(beta != 0.0, "beta must be nonzero");
    let s = b.len() + 1;
    SymMatrix::from_fn(s, |i, j| match (i, j) {
        (0, 0) => beta,
        (0, c) => b[c - 1],
        (r, c) => b[r - 1] * b[c - 1] / beta + if r == c { xi } else { 0.0 },
    })
}

/// WSONC verdict at an (approximately) stationary triple.
#[derive(Debug, Clone)]
pub struct WsoncReport {
    /// First-order residuals recorded for context; the verdict assumes the
    /// caller brought a near-KKT triple.
    pub kkt: FirstOrderResiduals,
    pub basis: NullSpaceBasis,
    /// Reduced matrix `B^T (hess_L + sigma) B`; `None` when the subspace
    /// is trivial.
    pub reduced: Option<SymMatrix>,
    /// Smallest eigenvalue of the reduced matrix; +inf on a trivial
    /// subspace (vacuous pass).
    pub min_eigenvalue: f64,
    pub pass: bool,
    pub tol: f64,
}

/// Checks the weak second-order condition: nonnegativity of the curvature
/// form `hess_L + sigma` on the subspace orthogonal to every equality
/// gradient, every row of `Dg_i` for zero-active blocks, and the boundary
/// rows `g~_i^T Gamma_i Dg_i`.
pub fn wsonc_check(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
    tol: f64,
) -> Result<WsoncReport, ConditionsError> {
    assert!(tol > 0.0);
    let kkt = first_order_residuals(problem, x, mu, omega)?;
    let sets = index_sets(problem, x, tol.max(1e-10), tol.max(1e-10), Some(omega));
    let data = problem.eval_lagrangian_data(x, mu, omega)?;

    let n = problem.dim();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..problem.equality_count() {
        rows.push(data.dh.row(i).to_vec());
    }
    for &i in &sets.zero {
        let dgi = problem.cone_block_jacobian(i, x);
        for r in 0..dgi.rows() {
            rows.push(dgi.row(r).to_vec());
        }
    }
    for &i in &sets.boundary {
        rows.push(boundary_constraint_row(problem, x, i));
    }
    let row_mat = Mat::from_rows(&rows, n);
    let basis = null_space(&row_mat, default_rank_tol(&row_mat));

    let mut curvature = data.hess_l.clone();
    curvature.add_assign_scaled(&sigma_term(problem, x, omega, &sets.boundary)?, 1.0);

    if basis.nullity() == 0 {
        return Ok(WsoncReport {
            kkt,
            basis,
            reduced: None,
            min_eigenvalue: f64::INFINITY,
            pass: true,
            tol,
        });
    }
    let reduced = reduce_to_basis(&curvature, &basis);
    let min_eig = min_eigenvalue(&reduced)?;
    Ok(WsoncReport {
        kkt,
        basis,
        reduced: Some(reduced),
        min_eigenvalue: min_eig,
        pass: min_eig >= -tol,
        tol,
    })
}

fn reduce_to_basis(a: &SymMatrix, basis: &NullSpaceBasis) -> SymMatrix {
    let k = basis.nullity();
    let n = basis.dim;
    SymMatrix::from_fn(k, |i, j| {
        let bi: Vec<f64> = (0..n).map(|r| basis.basis.get(r, i)).collect();
        let bj: Vec<f64> = (0..n).map(|r| basis.basis.get(r, j)).collect();
        dot(&bi, &a.matvec(&bj))
    })
}

/// Robinson-CQ diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct RobinsonReport {
    pub equality_count: usize,
    pub dh_rank: usize,
    pub full_row_rank: bool,
    /// Largest margin `t` with `Dh d = 0`, `g_i + Dg_i d - t e0_i in K_i`
    /// and `‖d‖_inf <= 1`; `None` when the rank test already failed.
    pub measure: Option<f64>,
    #[serde(skip_serializing)]
    pub direction: Option<Vec<f64>>,
    pub pass: bool,
}

/// Measures Robinson's constraint qualification at `x`: first the row rank
/// of `Dh`, then the best interior margin of the linearization, computed
/// by bisection over conic feasibility subproblems.
pub fn robinson_measure(problem: &Problem, x: &[f64]) -> Result<RobinsonReport, ConditionsError> {
    let dh = problem.equality_jacobian(x);
    let p = problem.equality_count();
    let rank = if p == 0 {
        0
    } else {
        null_space(&dh, default_rank_tol(&dh)).rank
    };
    if rank < p {
        return Ok(RobinsonReport {
            equality_count: p,
            dh_rank: rank,
            full_row_rank: false,
            measure: None,
            direction: None,
            pass: false,
        });
    }
    let feas = ConicFeasibilityProblem {
        dh,
        dg: problem.cone_jacobian(x),
        g: problem.cone_values(x),
    };
    let (t, d) = solve_conic_feasibility(&feas, 1e-6)?;
    Ok(RobinsonReport {
        equality_count: p,
        dh_rank: rank,
        full_row_rank: true,
        measure: Some(t),
        direction: Some(d),
        pass: t > 0.0,
    })
}

/// Constant-rank probe around `x`: ranks of the constraint-gradient row
/// family at the center and at random nearby points. Diagnostic only —
/// a numerical probe cannot decide the exact property.
#[derive(Debug, Clone, Serialize)]
pub struct WcrReport {
    pub center_rank: usize,
    pub sampled_ranks: Vec<usize>,
    pub constant: bool,
    pub radius: f64,
}

pub fn wcr_probe(
    problem: &Problem,
    x: &[f64],
    radius: f64,
    samples: usize,
    seed: u64,
) -> WcrReport {
    assert!(radius > 0.0);
    // Index sets are pinned at the center; gradients move with the sample.
    let sets = index_sets(problem, x, 1e-8, 1e-8, None);
    let rank_at = |y: &[f64]| -> usize {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let dh = problem.equality_jacobian(y);
        for i in 0..problem.equality_count() {
            rows.push(dh.row(i).to_vec());
        }
        for &i in &sets.zero {
            let dgi = problem.cone_block_jacobian(i, y);
            for r in 0..dgi.rows() {
                rows.push(dgi.row(r).to_vec());
            }
        }
        for &i in &sets.boundary {
            rows.push(boundary_constraint_row(problem, y, i));
        }
        let mat = Mat::from_rows(&rows, problem.dim());
        null_space(&mat, default_rank_tol(&mat)).rank
    };
    let center_rank = rank_at(x);
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next_unit = || {
        // splitmix64 mapped to [-1, 1].
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        (z as f64 / u64::MAX as f64) * 2.0 - 1.0
    };
    let mut sampled_ranks = Vec::with_capacity(samples);
    for _ in 0..samples {
        let y: Vec<f64> = x.iter().map(|xi| xi + radius * next_unit()).collect();
        sampled_ranks.push(rank_at(&y));
    }
    let constant = sampled_ranks.iter().all(|&r| r == center_rank);
    WcrReport { center_rank, sampled_ranks, constant, radius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;
    use crate::model::builtin;
    use crate::soc::{m_matrix, project_block, ConeProduct};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn paper_point() -> (Problem, Vec<f64>, BlockVector) {
        let p = builtin("paper_example").unwrap();
        let omega = BlockVector::new(p.cone().clone(), vec![0.5, -0.5]);
        (p, vec![1.0, 1.0], omega)
    }

    #[test]
    fn index_set_examples() {
        let p = builtin("interior_qp").unwrap();
        // g(0, 0) = (2, 0): interior.
        let sets = index_sets(&p, &[0.0, 0.0], 1e-8, 0.1, None);
        assert_eq!(sets.interior, vec![0]);
        assert!(sets.zero.is_empty() && sets.boundary.is_empty());

        let (p, x, _) = paper_point();
        let sets = index_sets(&p, &x, 1e-8, 0.1, None);
        assert_eq!(sets.boundary, vec![0]);
        assert_eq!(sets.eps_boundary, vec![0]);

        // g = (1, 0.5): neither eps-boundary nor eps-zero at eps = 0.1.
        let sets = index_sets(&p, &[1.0, 0.5f64.sqrt().sqrt()], 1e-8, 0.1, None);
        assert!(sets.eps_boundary.is_empty());
        assert!(sets.eps_zero.is_empty());
        assert_eq!(sets.interior, vec![0]);
    }

    #[test]
    fn index_sets_always_partition() {
        let mut rng = StdRng::seed_from_u64(21);
        for name in crate::model::builtin_names() {
            let p = builtin(name).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let sets = index_sets(&p, &x, 1e-8, 1e-3, None);
                let mut all: Vec<usize> = sets
                    .zero
                    .iter()
                    .chain(&sets.boundary)
                    .chain(&sets.interior)
                    .copied()
                    .collect();
                all.sort_unstable();
                assert_eq!(all, (0..p.cone().block_count()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn sigma_term_paper_example() {
        let (p, x, omega) = paper_point();
        let sigma = sigma_term(&p, &x, &omega, &[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((sigma.get(i, j) - 2.0).abs() <= 1e-12);
            }
        }
        // Zero multiplier: zero matrix. Linearity in the head.
        let zero = BlockVector::zeros(p.cone().clone());
        let s0 = sigma_term(&p, &x, &zero, &[0]).unwrap();
        assert_eq!(s0, SymMatrix::zeros(2));
        let doubled = BlockVector::new(p.cone().clone(), vec![1.0, -1.0]);
        let s2 = sigma_term(&p, &x, &doubled, &[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s2.get(i, j) - 2.0 * sigma.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sigma_rejects_zero_head() {
        let p = builtin("origin_soc").unwrap();
        let omega = BlockVector::new(p.cone().clone(), vec![1.0, 0.0]);
        // g(0,0) = (0,0): head is zero.
        assert!(matches!(
            sigma_term(&p, &[0.0, 0.0], &omega, &[0]),
            Err(ConditionsError::InvalidBlock { .. })
        ));
    }

    #[test]
    fn first_order_residuals_paper_example() {
        let (p, x, omega) = paper_point();
        let r = first_order_residuals(&p, &x, &[], &omega).unwrap();
        assert!(r.stationarity <= 1e-14);
        assert!(r.feasibility <= 1e-14);
        assert!(r.akkt_complementarity <= 1e-14);
        assert!(r.cakkt_complementarity <= 1e-14);
    }

    #[test]
    fn residuals_reduce_to_objective_gradient() {
        let p = builtin("interior_qp").unwrap();
        let omega = BlockVector::zeros(p.cone().clone());
        let x = [0.0, 0.0];
        let r = first_order_residuals(&p, &x, &[], &omega).unwrap();
        assert!((r.stationarity - norm(&p.objective_gradient(&x))).abs() <= 1e-14);
        assert_eq!(r.akkt_complementarity, 0.0);
        assert_eq!(r.cakkt_complementarity, 0.0);
        assert_eq!(r.feasibility, 0.0);
    }

    #[test]
    fn infeasible_scalar_soc_feasibility() {
        let p = builtin("scalar_soc").unwrap();
        // At x = 0: g = (0, 1), Pi(-g) = Pi((0, -1)) = (1/2, -1/2).
        let r = feasibility_residual(&p, &[0.0]);
        assert!((r - 0.5f64.sqrt()).abs() <= 1e-14);
        let manual = norm(&project_block(&[0.0, -1.0]));
        assert!((r - manual).abs() <= 1e-15);
    }

    #[test]
    fn akkt2_matrix_paper_example() {
        let (p, x, omega) = paper_point();
        let sets = index_sets(&p, &x, 1e-8, 1e-2, Some(&omega));
        // All parameters zero, omega zero: matrix reduces to hess_L = 0.
        let zero_omega = BlockVector::zeros(p.cone().clone());
        let a = akkt2_matrix(&p, &x, &[], &zero_omega, &Akkt2Params::zero(0), &sets).unwrap();
        assert_eq!(a, SymMatrix::zeros(2));

        // With the boundary multiplier: hess_L + sigma = [[3,4],[4,3]].
        let a = akkt2_matrix(&p, &x, &[], &omega, &Akkt2Params::zero(0), &sets).unwrap();
        assert!((a.get(0, 0) - 3.0).abs() <= 1e-12);
        assert!((a.get(0, 1) - 4.0).abs() <= 1e-12);
        assert!((min_eigenvalue(&a).unwrap() + 1.0).abs() <= 1e-10);

        // Quadratic form of hess_L alone along (1, -1) is -2.
        let data = p.eval_lagrangian_data(&x, &[], &omega).unwrap();
        assert!((data.hess_l.quadratic_form(&[1.0, -1.0]) + 2.0).abs() <= 1e-12);

        // The certifying rank-one boundary term is orthogonal to (1, -1),
        // so the full certificate matrix keeps the same form value.
        let params = akkt2_penalty_params(&p, &x, 7.5, &sets).unwrap();
        let full = akkt2_matrix(&p, &x, &[], &omega, &params, &sets).unwrap();
        assert!((full.quadratic_form(&[1.0, -1.0]) + 2.0).abs() <= 1e-9);
    }

    #[test]
    fn penalty_params_formulas() {
        // Boundary block (1, 1) at rho = 10: gamma = 10, phi = 0.
        let (p, x, _) = paper_point();
        let sets = index_sets(&p, &x, 1e-8, 1e-2, None);
        let params = akkt2_penalty_params(&p, &x, 10.0, &sets).unwrap();
        assert_eq!(params.gamma_of(0), 10.0);
        assert_eq!(params.phi_of(0), 0.0);
        assert_eq!(params.delta, 0.0);

        // Outside block g = (0.9, 1.0): gamma = 9, phi = 1/9.
        let spec = crate::model::ProblemSpecFile {
            name: Some("probe".into()),
            n: 1,
            objective: "x1".into(),
            equalities: vec![],
            cones: vec![vec!["0.9".into(), "1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let sets = index_sets(&p, &[0.0], 1e-8, 1e-2, None);
        assert_eq!(sets.boundary, vec![0]);
        let params = akkt2_penalty_params(&p, &[0.0], 10.0, &sets).unwrap();
        assert!((params.gamma_of(0) - 9.0).abs() <= 1e-12);
        assert!((params.phi_of(0) - 1.0 / 9.0).abs() <= 1e-12);
        // delta = phi * lambda_max(Dg^T Dg) with Dg = 0 here.
        assert_eq!(params.delta, 0.0);

        // Interior block contributes nothing.
        let p2 = builtin("interior_qp").unwrap();
        let sets2 = index_sets(&p2, &[0.0, 0.0], 1e-8, 1e-2, None);
        let params2 = akkt2_penalty_params(&p2, &[0.0, 0.0], 10.0, &sets2).unwrap();
        assert!(params2.gamma.is_empty() && params2.phi.is_empty());
        assert_eq!(params2.delta, 0.0);

        // Zero-active blocks get theta = rho.
        let p3 = builtin("origin_soc").unwrap();
        let sets3 = index_sets(&p3, &[0.0, 0.0], 1e-8, 1e-2, None);
        assert_eq!(sets3.zero, vec![0]);
        let params3 = akkt2_penalty_params(&p3, &[0.0, 0.0], 10.0, &sets3).unwrap();
        assert_eq!(params3.theta_of(0), 10.0);
    }

    #[test]
    fn boundary_block_matrix_cases() {
        // Exact boundary block: the bsub selection at -g is 0, so the
        // matrix equals gamma (Gamma g~)(Gamma g~)^T = 2 rho M(-1, -ghat).
        let spec = crate::model::ProblemSpecFile {
            name: Some("probe".into()),
            n: 1,
            objective: "x1".into(),
            equalities: vec![],
            cones: vec![vec!["1".into(), "1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let x = [0.0];
        let rho = 7.0;
        let g = p.cone_values(&x);
        let neg = BlockVector::new(
            p.cone().clone(),
            g.as_slice().iter().map(|v| -v).collect(),
        );
        let omega_data = project_cone(&neg)
            .as_slice()
            .iter()
            .map(|v| rho * v)
            .collect::<Vec<_>>();
        let omega = BlockVector::new(p.cone().clone(), omega_data);
        let a = penalty_boundary_block_matrix(&p, &x, &omega, rho, 0).unwrap();
        let mut expect = m_matrix(-1.0, &[-1.0]).unwrap();
        expect.scale(2.0 * rho);
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - expect.get(i, j)).abs() <= 1e-12);
            }
        }
        assert!(min_eigenvalue(&a).unwrap() >= -1e-10);
    }

    #[test]
    fn boundary_block_matrix_outside_case() {
        // g = (0.9, 1.0, 0.0) outside the cone at rho = 10.
        let spec = crate::model::ProblemSpecFile {
            name: Some("probe".into()),
            n: 2,
            objective: "x1".into(),
            equalities: vec![],
            cones: vec![vec!["0.9 + 0*x1".into(), "1 + 0*x2".into(), "0*x1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let x = [0.0, 0.0];
        let rho = 10.0;
        let g = p.cone_values(&x);
        let neg = BlockVector::new(
            p.cone().clone(),
            g.as_slice().iter().map(|v| -v).collect(),
        );
        let omega_data: Vec<f64> = project_cone(&neg).as_slice().iter().map(|v| rho * v).collect();
        let omega = BlockVector::new(p.cone().clone(), omega_data);
        let a = penalty_boundary_block_matrix(&p, &x, &omega, rho, 0).unwrap();
        assert!(min_eigenvalue(&a).unwrap() >= -1e-10);
    }

    #[test]
    fn boundary_block_matrix_psd_property() {
        // Random near-boundary configurations, head ratio in [0.55, 1.5];
        // 10% pinned exactly on the boundary.
        let mut rng = StdRng::seed_from_u64(22);
        for case in 0..2000 {
            let m = rng.gen_range(2..=4usize);
            let mut tail: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&tail) < 1e-3 {
                tail[0] = 1.0;
            }
            let tn = norm(&tail);
            let ratio = if case % 10 == 0 { 1.0 } else { rng.gen_range(0.55..1.5) };
            let head = ratio * tn;
            let mut comps: Vec<String> = vec![format!("{head}")];
            comps.extend(tail.iter().map(|t| format!("{t}")));
            let spec = crate::model::ProblemSpecFile {
                name: None,
                n: 1,
                objective: "x1".into(),
                equalities: vec![],
                cones: vec![comps],
                known_solution: None,
            };
            let p = Problem::from_spec(spec).unwrap();
            let rho = 10f64.powf(rng.gen_range(-1.0..4.0));
            let g = p.cone_values(&[0.0]);
            let neg = BlockVector::new(
                p.cone().clone(),
                g.as_slice().iter().map(|v| -v).collect(),
            );
            let omega_data: Vec<f64> =
                project_cone(&neg).as_slice().iter().map(|v| rho * v).collect();
            let omega = BlockVector::new(p.cone().clone(), omega_data);
            let a = penalty_boundary_block_matrix(&p, &[0.0], &omega, rho, 0).unwrap();
            let lam = min_eigenvalue(&a).unwrap();
            assert!(
                lam >= -1e-8 * a.frobenius().max(1.0),
                "case {case}: ratio {ratio}, rho {rho}, min eig {lam}"
            );
        }
    }

    #[test]
    fn bordered_gram_examples_and_property() {
        let p = bordered_gram_matrix(1.0, 0.0, &[0.0, 0.0]);
        assert!(min_eigenvalue(&p).unwrap() >= -1e-12);
        let p = bordered_gram_matrix(2.0, 1.0, &[1.0, 1.0]);
        assert!(min_eigenvalue(&p).unwrap() > 0.0);
        let p = bordered_gram_matrix(1.0, -0.5, &[0.0]);
        assert!((min_eigenvalue(&p).unwrap() + 0.5).abs() <= 1e-12);

        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..2000 {
            let s = rng.gen_range(1..=5);
            let beta = rng.gen_range(1e-3..10.0);
            let xi = rng.gen_range(0.0..5.0);
            let b: Vec<f64> = (0..s).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = bordered_gram_matrix(beta, xi, &b);
            assert!(min_eigenvalue(&p).unwrap() >= -1e-10 * p.frobenius().max(1.0));
            if xi > 1e-6 {
                let u: Vec<f64> = (0..=s).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if norm(&u) > 1e-3 {
                    assert!(p.quadratic_form(&u) > 0.0);
                }
            }
        }
    }

    #[test]
    fn wsonc_paper_example_fails_with_reduced_minus_one() {
        let (p, x, omega) = paper_point();
        let report = wsonc_check(&p, &x, &[], &omega, 1e-8).unwrap();
        assert!(!report.pass);
        assert_eq!(report.basis.nullity(), 1);
        let b = [report.basis.basis.get(0, 0), report.basis.basis.get(1, 0)];
        assert!((b[0] + b[1]).abs() <= 1e-10);
        assert!((report.min_eigenvalue + 1.0).abs() <= 1e-9);
    }

    #[test]
    fn wsonc_vacuous_on_scalar_soc() {
        let p = builtin("scalar_soc").unwrap();
        let omega = BlockVector::new(p.cone().clone(), vec![1.0, -1.0]);
        let report = wsonc_check(&p, &[1.0], &[], &omega, 1e-8).unwrap();
        assert!(report.pass);
        assert_eq!(report.basis.nullity(), 0);
        assert!(report.reduced.is_none());
    }

    #[test]
    fn wsonc_passes_at_interior_minimizer() {
        let p = builtin("interior_qp").unwrap();
        let omega = BlockVector::zeros(p.cone().clone());
        let report = wsonc_check(&p, &[1.0, 0.25], &[], &omega, 1e-8).unwrap();
        assert!(report.pass);
        assert_eq!(report.basis.nullity(), 2);
        assert!(report.min_eigenvalue >= 2.0 - 1e-10);
    }

    #[test]
    fn wsonc_reduced_matrix_symmetric() {
        let (p, x, omega) = paper_point();
        let report = wsonc_check(&p, &x, &[], &omega, 1e-8).unwrap();
        if let Some(m) = &report.reduced {
            let eig = sym_eigen(m).unwrap();
            assert_eq!(eig.values.len(), report.basis.nullity());
        }
    }

    #[test]
    fn robinson_rank_deficiency_detected() {
        let p = builtin("degenerate_eq").unwrap();
        let report = robinson_measure(&p, &[0.0]).unwrap();
        assert!(!report.full_row_rank);
        assert_eq!(report.dh_rank, 0);
        assert!(!report.pass);
        assert!(report.measure.is_none());
    }

    #[test]
    fn robinson_constant_block_equals_eta1() {
        // Constant g = (2, 1, 0): Dg = 0, so no direction helps and the
        // measure is eta1(g) = 1.
        let spec = crate::model::ProblemSpecFile {
            name: Some("const".into()),
            n: 2,
            objective: "x1".into(),
            equalities: vec![],
            cones: vec![vec!["2 + 0*x1".into(), "1 + 0*x1".into(), "0*x1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let report = robinson_measure(&p, &[0.0, 0.0]).unwrap();
        let t = report.measure.unwrap();
        assert!((t - 1.0).abs() <= 1e-4, "measure {t}");
        assert!(report.pass);
    }

    #[test]
    fn robinson_paper_example_grid_oracle() {
        let (p, x, _) = paper_point();
        let report = robinson_measure(&p, &x).unwrap();
        let t = report.measure.unwrap();

        // Grid oracle over ||d||_inf <= 1.
        let g = p.cone_values(&x);
        let dg = p.cone_jacobian(&x);
        let mut best = f64::NEG_INFINITY;
        let steps = 80;
        for i in 0..=steps {
            for j in 0..=steps {
                let d = [
                    -1.0 + 2.0 * i as f64 / steps as f64,
                    -1.0 + 2.0 * j as f64 / steps as f64,
                ];
                let gd = dg.matvec(&d);
                let z = [g.as_slice()[0] + gd[0], g.as_slice()[1] + gd[1]];
                best = best.max(z[0] - z[1].abs());
            }
        }
        assert!(report.pass);
        assert!((t - best).abs() <= 0.05, "bisection {t} vs grid {best}");
    }

    #[test]
    fn wcr_probe_linear_constant_rank() {
        let p = builtin("scalar_soc").unwrap();
        let report = wcr_probe(&p, &[1.0], 0.1, 20, 7);
        assert!(report.constant);
    }

    #[test]
    fn wcr_probe_degenerate_eq_rank_jump() {
        let p = builtin("degenerate_eq").unwrap();
        // grad h = 2x vanishes exactly at 0 and nowhere else.
        let report = wcr_probe(&p, &[0.0], 0.1, 30, 7);
        assert_eq!(report.center_rank, 0);
        assert!(!report.constant);
    }

    #[test]
    fn wcr_probe_paper_example_recorded() {
        let (p, x, _) = paper_point();
        let report = wcr_probe(&p, &x, 0.05, 20, 7);
        // Diagnostic only: the probe records ranks without a ground truth.
        assert_eq!(report.sampled_ranks.len(), 20);
    }

    #[test]
    fn conic_feasibility_equality_rows_pin_direction() {
        // Equalities spanning R^n force d = 0, so t = eta1(g).
        let spec = crate::model::ProblemSpecFile {
            name: None,
            n: 2,
            objective: "x1".into(),
            equalities: vec!["x1".into(), "x2".into()],
            cones: vec![vec!["3 + x1".into(), "1 + x2".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let report = robinson_measure(&p, &[0.0, 0.0]).unwrap();
        let t = report.measure.unwrap();
        assert!((t - 2.0).abs() <= 1e-3, "measure {t}");
    }

    #[test]
    fn infeasible_linearization_certified_negative() {
        // g = (-2, 1) with Dg = 0: no direction improves, t_max = eta1 = -3.
        let spec = crate::model::ProblemSpecFile {
            name: None,
            n: 1,
            objective: "x1".into(),
            equalities: vec![],
            cones: vec![vec!["-2 + 0*x1".into(), "1 + 0*x1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let report = robinson_measure(&p, &[0.0]).unwrap();
        let t = report.measure.unwrap();
        assert!(t < 0.0);
        assert!((t + 3.0).abs() <= 1e-3, "measure {t}");
        assert!(!report.pass);
    }

    #[test]
    fn ray_control_at_boundary_pairs() {
        // scalar_soc at x = 1 with the exact multiplier: the ray is
        // exactly opposed, control = 0.
        let p = builtin("scalar_soc").unwrap();
        let omega = BlockVector::new(p.cone().clone(), vec![1.0, -1.0]);
        assert!(akkt_ray_control(&p, &[1.0], &omega) <= 1e-14);
        // Misaligned multiplier: neither small nor opposed.
        let omega = BlockVector::new(p.cone().clone(), vec![1.0, 1.0]);
        let c = akkt_ray_control(&p, &[1.0], &omega);
        assert!((c - 2.0f64.min(2.0f64.sqrt())).abs() <= 1.0);
        assert!(c > 1.0);
        // Tiny multiplier counts through its norm.
        let omega = BlockVector::new(p.cone().clone(), vec![1e-9, 1e-9]);
        assert!(akkt_ray_control(&p, &[1.0], &omega) <= 2e-9);
    }

    #[test]
    fn boundary_row_matches_hand_computation() {
        let (p, x, _) = paper_point();
        let row = boundary_constraint_row(&p, &x, 0);
        assert!((row[0] + 2.0).abs() <= 1e-12);
        assert!((row[1] + 2.0).abs() <= 1e-12);
    }

    #[test]
    fn cone_product_partition_invariants() {
        let cone = ConeProduct::new(vec![2, 1, 3]);
        assert_eq!(cone.total_dim(), 6);
        assert_eq!(cone.offset(2), 3);
    }
}
