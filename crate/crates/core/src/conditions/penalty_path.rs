//! Quartic-penalty path: for an increasing penalty schedule, locally
//! minimize
//!
//! ```text
//! F_k(x) = f(x) + (1/4)‖x - x̂‖^4
//!        + (rho_k/2) (sum_i ‖Pi_{K_i}(-g_i(x))‖^2 + ‖h(x)‖^2)
//! ```
//!
//! around a feasible hint x̂, then certify each minimizer with the
//! multiplier estimates `mu = rho h(x)`, `omega_i = rho Pi(-g_i(x))` and
//! the explicit penalty parameters (diagonal shift corrected by
//! `3‖x - x̂‖^2` for the quartic proximal term).
//!
//! This is a verification device, not a solver: the hint stands in for
//! the point being certified, and the inner minimization tracks the
//! stationary branch through the hint (first-order exit) rather than
//! hunting for lower basins.

use super::certificate::{certify_iterate, Akkt2Certificate};
use super::{feasibility_residual, index_sets, ConditionsError};
use crate::linalg::{dot, SymMatrix};
use crate::model::Problem;
use crate::newton::{minimize_to_stationarity, NewtonStatus, SecondOrderModel};
use crate::soc::{penalty_jacobian_selection, project_block, BlockVector};

const HINT_FEASIBILITY: f64 = 1e-6;

#[derive(Debug)]
pub struct PenaltyPathOutcome {
    pub certificate: Akkt2Certificate,
    pub final_x: Vec<f64>,
}

struct QuarticPenaltyModel<'a> {
    problem: &'a Problem,
    center: &'a [f64],
    rho: f64,
}

impl QuarticPenaltyModel<'_> {
    fn multipliers(&self, x: &[f64]) -> (Vec<f64>, BlockVector) {
        let mu: Vec<f64> = self.problem.equality_values(x).iter().map(|h| self.rho * h).collect();
        let g = self.problem.cone_values(x);
        let mut omega = BlockVector::zeros(self.problem.cone().clone());
        for i in 0..self.problem.cone().block_count() {
            let neg: Vec<f64> = g.block(i).iter().map(|v| -v).collect();
            let proj = project_block(&neg);
            for (o, p) in omega.block_mut(i).iter_mut().zip(&proj) {
                *o = self.rho * p;
            }
        }
        (mu, omega)
    }
}

impl SecondOrderModel for QuarticPenaltyModel<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let dx: Vec<f64> = x.iter().zip(self.center).map(|(a, b)| a - b).collect();
        let quartic = 0.25 * dot(&dx, &dx).powi(2);
        let h = self.problem.equality_values(x);
        let g = self.problem.cone_values(x);
        let mut penalty = dot(&h, &h);
        for i in 0..self.problem.cone().block_count() {
            let neg: Vec<f64> = g.block(i).iter().map(|v| -v).collect();
            let proj = project_block(&neg);
            penalty += dot(&proj, &proj);
        }
        self.problem.objective_value(x) + quartic + 0.5 * self.rho * penalty
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let dx: Vec<f64> = x.iter().zip(self.center).map(|(a, b)| a - b).collect();
        let dx_sq = dot(&dx, &dx);
        let (mu, omega) = self.multipliers(x);
        // grad f + ‖dx‖^2 dx + Dh^T (rho h) - Dg^T (rho Pi(-g))
        // which is exactly grad_x L(x, mu, omega) + quartic term.
        let data = self
            .problem
            .eval_lagrangian_data(x, &mu, &omega)
            .expect("dimensions fixed by construction");
        let mut grad = data.grad_l;
        for (gi, di) in grad.iter_mut().zip(&dx) {
            *gi += dx_sq * di;
        }
        grad
    }

    fn hessian(&self, x: &[f64]) -> SymMatrix {
        let dx: Vec<f64> = x.iter().zip(self.center).map(|(a, b)| a - b).collect();
        let dx_sq = dot(&dx, &dx);
        let (mu, omega) = self.multipliers(x);
        let data = self
            .problem
            .eval_lagrangian_data(x, &mu, &omega)
            .expect("dimensions fixed by construction");
        let mut hess = data.hess_l;
        for i in 0..self.problem.equality_count() {
            hess.rank_one_update(data.dh.row(i), self.rho);
        }
        let g = data.g;
        for i in 0..self.problem.cone().block_count() {
            let v_sel = penalty_jacobian_selection(g.block(i), 1e-10);
            let dgi = self.problem.cone_block_jacobian(i, x);
            let congr = SymMatrix::congruence(&v_sel, &dgi);
            hess.add_assign_scaled(&congr, self.rho);
        }
        hess.add_diag(dx_sq);
        hess.rank_one_update(&dx, 2.0);
        hess
    }
}

/// Runs the penalty path. `rho_schedule` and `inner_tol_schedule` are
/// zipped; a shorter tolerance schedule repeats its last entry. The hint
/// must be feasible to 1e-6. Inner stalls mark the row unconverged and the
/// path continues from the stalled point.
pub fn penalty_path(
    problem: &Problem,
    x_star_hint: &[f64],
    rho_schedule: &[f64],
    inner_tol_schedule: &[f64],
) -> Result<PenaltyPathOutcome, ConditionsError> {
    assert!(!rho_schedule.is_empty(), "empty penalty schedule");
    assert!(!inner_tol_schedule.is_empty(), "empty tolerance schedule");
    let r_v = feasibility_residual(problem, x_star_hint);
    if !(r_v <= HINT_FEASIBILITY) {
        return Err(ConditionsError::InfeasibleHint { r_v, required: HINT_FEASIBILITY });
    }

    // Active structure is pinned at the hint: the certificate parameters
    // live on the limit point's index sets.
    let hint_sets = index_sets(problem, x_star_hint, HINT_FEASIBILITY, HINT_FEASIBILITY, None);

    let mut certificate = Akkt2Certificate::new();
    let mut x = x_star_hint.to_vec();
    for (k, &rho) in rho_schedule.iter().enumerate() {
        let tol = *inner_tol_schedule
            .get(k)
            .unwrap_or_else(|| inner_tol_schedule.last().unwrap());
        let model = QuarticPenaltyModel { problem, center: x_star_hint, rho };
        // First-order tracking on purpose: the path certifies the
        // stationary branch anchored at the hint. A curvature-escaping
        // minimizer would tunnel out of that branch whenever the hint is
        // a stationary point without being a local minimizer, which is
        // precisely the situation the certificate exists to expose.
        let result = minimize_to_stationarity(&model, &x, tol, 500);
        let converged = result.status == NewtonStatus::Converged;
        x = result.x;

        let (mu, omega) = model.multipliers(&x);
        let dx_sq: f64 = x
            .iter()
            .zip(x_star_hint)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let row = certify_iterate(
            problem,
            k,
            &x,
            &mu,
            &omega,
            rho,
            &hint_sets,
            3.0 * dx_sq,
            converged,
            None,
        )?;
        certificate.push(row);
    }
    Ok(PenaltyPathOutcome { certificate, final_x: x })
}
