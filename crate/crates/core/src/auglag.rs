//! Safeguarded augmented Lagrangian method with a second-order inner exit
//! test.
//!
//! The augmented Lagrangian is kept in its printed form
//!
//! ```text
//! L_rho(x, m̂u, ôm) = f(x) + (1/(2 rho)) { ‖m̂u - rho h(x)‖^2
//!                  + sum_i ( ‖Pi(ôm_i - rho g_i(x))‖^2 - ‖ôm_i‖^2 ) }
//! ```
//!
//! whose x-gradient equals the Lagrangian gradient at the implied
//! multipliers `mu = rho h(x) - m̂u`, `omega_i = Pi(ôm_i - rho g_i(x))`.
//! With the Lagrangian convention `L = f + <h, mu> - <g, omega>` used by
//! every checker in this crate, the equality multiplier reported outward
//! is the negative of the safeguarded working copy's raw update; the
//! safeguarded copy itself follows the printed update `m̂u - rho h`.
//! Both conventions describe the same stationary set - equality
//! multipliers carry no sign constraint - and wiring them this way makes
//! the reported stationarity equal the inner gradient norm bit for bit.
//!
//! The inner solver must certify both a small gradient and an
//! eps-positive-semidefinite surrogate Hessian, where the surrogate
//! replaces the projection's (nonexistent) second derivative with a fixed
//! generalized-Jacobian selection at `-g(x)`.

use thiserror::Error;

use crate::conditions::{certify_iterate_local_sets, Akkt2Certificate, ConditionsError};
use crate::linalg::{norm, norm_inf, SymMatrix};
use crate::model::Problem;
use crate::newton::{minimize, NewtonResult, NewtonStatus, SecondOrderModel};
use crate::soc::{classify, penalty_jacobian_selection, project_block, BlockVector, ConeRegion};
use crate::trace::{IterateTrace, SolveStatus, TraceRow};

#[derive(Debug, Error)]
pub enum AuglagError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Conditions(#[from] ConditionsError),
}

#[derive(Debug, Clone)]
pub struct AuglagConfig {
    /// Penalty growth factor, > 1.
    pub gamma: f64,
    /// Initial penalty, > 0.
    pub rho0: f64,
    /// Infeasibility-decrease requirement, in (0, 1).
    pub tau: f64,
    /// Inner tolerance schedule eps_k = max(eps0 * eps_decay^k, eps_floor).
    pub eps0: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    /// Safeguard caps.
    pub mu_max: f64,
    pub omega_max: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// First-order convergence target.
    pub target_tol: f64,
    /// Penalty cap: beyond this the run is declared infeasible-stationary.
    pub rho_cap: f64,
    /// Active-set tolerance for the per-iterate certificate.
    pub cert_eps_active: f64,
}

impl Default for AuglagConfig {
    fn default() -> Self {
        AuglagConfig {
            gamma: 10.0,
            rho0: 10.0,
            tau: 0.5,
            eps0: 1e-2,
            eps_decay: 0.5,
            eps_floor: 1e-10,
            mu_max: 1e8,
            omega_max: 1e8,
            max_outer: 80,
            max_inner: 300,
            target_tol: 1e-8,
            rho_cap: 1e14,
            cert_eps_active: 1e-6,
        }
    }
}

impl AuglagConfig {
    pub fn validate(&self) -> Result<(), AuglagError> {
        if !(self.gamma > 1.0) {
            return Err(AuglagError::InvalidConfig("gamma must exceed 1".into()));
        }
        if !(self.rho0 > 0.0) {
            return Err(AuglagError::InvalidConfig("rho0 must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(AuglagError::InvalidConfig("tau must lie in (0, 1)".into()));
        }
        if !(self.eps0 > 0.0 && self.eps_decay > 0.0 && self.eps_decay < 1.0) {
            return Err(AuglagError::InvalidConfig("eps schedule must decrease to 0".into()));
        }
        if !(self.mu_max > 0.0 && self.omega_max > 0.0) {
            return Err(AuglagError::InvalidConfig("multiplier caps must be positive".into()));
        }
        Ok(())
    }

    fn eps_at(&self, k: usize) -> f64 {
        (self.eps0 * self.eps_decay.powi(k as i32)).max(self.eps_floor)
    }
}

/// Mutable outer-iteration state.
#[derive(Debug, Clone)]
pub struct AuglagState {
    pub k: usize,
    pub x: Vec<f64>,
    /// Safeguarded multipliers driving the inner objective.
    pub hat_mu: Vec<f64>,
    pub hat_omega: BlockVector,
    /// Implied (reported) multipliers of the latest iterate.
    pub mu: Vec<f64>,
    pub omega: BlockVector,
    pub rho: f64,
    pub prev_infeasibility: f64,
}

impl AuglagState {
    pub fn start(problem: &Problem, config: &AuglagConfig, x0: Vec<f64>) -> Self {
        assert_eq!(x0.len(), problem.dim());
        AuglagState {
            k: 0,
            x: x0,
            hat_mu: vec![0.0; problem.equality_count()],
            hat_omega: BlockVector::zeros(problem.cone().clone()),
            mu: vec![0.0; problem.equality_count()],
            omega: BlockVector::zeros(problem.cone().clone()),
            rho: config.rho0,
            prev_infeasibility: f64::INFINITY,
        }
    }
}

/// The augmented Lagrangian value in its printed form.
pub fn auglag_value(
    problem: &Problem,
    x: &[f64],
    hat_mu: &[f64],
    hat_omega: &BlockVector,
    rho: f64,
) -> f64 {
    assert!(rho > 0.0);
    let h = problem.equality_values(x);
    let g = problem.cone_values(x);
    let mut acc = 0.0;
    for (m, hv) in hat_mu.iter().zip(&h) {
        let d = m - rho * hv;
        acc += d * d;
    }
    for i in 0..problem.cone().block_count() {
        let shifted: Vec<f64> = hat_omega
            .block(i)
            .iter()
            .zip(g.block(i))
            .map(|(o, gv)| o - rho * gv)
            .collect();
        let proj = project_block(&shifted);
        acc += proj.iter().map(|v| v * v).sum::<f64>();
        acc -= hat_omega.block(i).iter().map(|v| v * v).sum::<f64>();
    }
    problem.objective_value(x) + acc / (2.0 * rho)
}

/// Implied multipliers at `x`: `mu = rho h - m̂u` (Lagrangian convention
/// of this crate), `omega_i = Pi(ôm_i - rho g_i)`.
pub fn implied_multipliers(
    problem: &Problem,
    x: &[f64],
    hat_mu: &[f64],
    hat_omega: &BlockVector,
    rho: f64,
) -> (Vec<f64>, BlockVector) {
    let h = problem.equality_values(x);
    let mu: Vec<f64> = h.iter().zip(hat_mu).map(|(hv, m)| rho * hv - m).collect();
    let g = problem.cone_values(x);
    let mut omega = BlockVector::zeros(problem.cone().clone());
    for i in 0..problem.cone().block_count() {
        let shifted: Vec<f64> = hat_omega
            .block(i)
            .iter()
            .zip(g.block(i))
            .map(|(o, gv)| o - rho * gv)
            .collect();
        let proj = project_block(&shifted);
        omega.block_mut(i).copy_from_slice(&proj);
    }
    (mu, omega)
}

/// Gradient of the augmented Lagrangian; evaluates the Lagrangian gradient
/// at the implied multipliers so the update identity is exact.
pub fn auglag_grad(
    problem: &Problem,
    x: &[f64],
    hat_mu: &[f64],
    hat_omega: &BlockVector,
    rho: f64,
) -> Vec<f64> {
    let (mu, omega) = implied_multipliers(problem, x, hat_mu, hat_omega, rho);
    problem
        .eval_lagrangian_data(x, &mu, &omega)
        .expect("dimensions fixed by construction")
        .grad_l
}

/// Surrogate second-order operator: the Lagrangian Hessian at the implied
/// multipliers plus `rho sum grad h grad h^T + rho sum Dg^T V Dg`, with V
/// the fixed generalized-Jacobian selection at `-g(x)` (identity on the
/// closed `-K` side, zero strictly inside K, the M-matrix otherwise).
pub fn surrogate_hessian(
    problem: &Problem,
    x: &[f64],
    hat_mu: &[f64],
    hat_omega: &BlockVector,
    rho: f64,
) -> SymMatrix {
    let (mu, omega) = implied_multipliers(problem, x, hat_mu, hat_omega, rho);
    let data = problem
        .eval_lagrangian_data(x, &mu, &omega)
        .expect("dimensions fixed by construction");
    let mut hess = data.hess_l;
    for i in 0..problem.equality_count() {
        hess.rank_one_update(data.dh.row(i), rho);
    }
    for i in 0..problem.cone().block_count() {
        let gi = data.g.block(i);
        let v_sel = penalty_jacobian_selection(gi, 1e-10);
        let dgi = problem.cone_block_jacobian(i, x);
        let congr = SymMatrix::congruence(&v_sel, &dgi);
        hess.add_assign_scaled(&congr, rho);
    }
    hess
}

struct AuglagModel<'a> {
    problem: &'a Problem,
    hat_mu: &'a [f64],
    hat_omega: &'a BlockVector,
    rho: f64,
}

impl SecondOrderModel for AuglagModel<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        auglag_value(self.problem, x, self.hat_mu, self.hat_omega, self.rho)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        auglag_grad(self.problem, x, self.hat_mu, self.hat_omega, self.rho)
    }
    fn hessian(&self, x: &[f64]) -> SymMatrix {
        surrogate_hessian(self.problem, x, self.hat_mu, self.hat_omega, self.rho)
    }
}

/// Inner solve: returns a point certifying `‖grad L_rho‖ <= eps` and
/// `lambda_min(surrogate) >= -eps`, or the stalled best point.
pub fn inner_solve(
    problem: &Problem,
    x0: &[f64],
    hat_mu: &[f64],
    hat_omega: &BlockVector,
    rho: f64,
    eps: f64,
    max_inner: usize,
) -> NewtonResult {
    let model = AuglagModel { problem, hat_mu, hat_omega, rho };
    minimize(&model, x0, eps, max_inner)
}

#[derive(Debug, Clone)]
pub struct OuterStepInfo {
    pub inner: NewtonResult,
    pub eps: f64,
    /// max(‖h‖_inf, ‖v‖_inf) with v the projected complementarity measure.
    pub infeasibility: f64,
    pub rho_increased: bool,
}

/// One outer iteration: inner solve, penalty test, multiplier update and
/// safeguarding. Returns the step diagnostics; `state` is advanced.
pub fn outer_step(
    state: &mut AuglagState,
    problem: &Problem,
    config: &AuglagConfig,
) -> OuterStepInfo {
    let eps = config.eps_at(state.k);
    let inner = inner_solve(
        problem,
        &state.x,
        &state.hat_mu,
        &state.hat_omega,
        state.rho,
        eps,
        config.max_inner,
    );
    state.x = inner.x.clone();
    state.k += 1;

    let h = problem.equality_values(&state.x);
    let g = problem.cone_values(&state.x);

    // v_i = Pi(ôm_i/rho - g_i) - ôm_i/rho.
    let mut v_inf = 0.0f64;
    for i in 0..problem.cone().block_count() {
        let scaled: Vec<f64> = state
            .hat_omega
            .block(i)
            .iter()
            .zip(g.block(i))
            .map(|(o, gv)| o / state.rho - gv)
            .collect();
        let proj = project_block(&scaled);
        for (pv, ov) in proj.iter().zip(state.hat_omega.block(i)) {
            v_inf = v_inf.max((pv - ov / state.rho).abs());
        }
    }
    let infeasibility = norm_inf(&h).max(v_inf);

    let (mu, omega) = implied_multipliers(
        problem,
        &state.x,
        &state.hat_mu,
        &state.hat_omega,
        state.rho,
    );
    state.mu = mu;
    state.omega = omega;

    // Penalty rule: keep rho only on sufficient infeasibility decrease.
    let rho_increased = !(infeasibility <= config.tau * state.prev_infeasibility);
    let rho_used = state.rho;
    if rho_increased {
        state.rho *= config.gamma;
    }
    state.prev_infeasibility = infeasibility;

    // Safeguarding: the printed hat update for mu, clamped componentwise;
    // omega blocks scaled radially (scaling preserves cone membership).
    for (hm, hv) in state.hat_mu.iter_mut().zip(&h) {
        let raw = *hm - rho_used * hv;
        *hm = raw.clamp(-config.mu_max, config.mu_max);
    }
    let omega_snapshot = state.omega.clone();
    for i in 0..problem.cone().block_count() {
        let block = omega_snapshot.block(i);
        let bn = norm(block);
        let scale = if bn > config.omega_max { config.omega_max / bn } else { 1.0 };
        for (ho, ov) in state.hat_omega.block_mut(i).iter_mut().zip(block) {
            *ho = scale * ov;
        }
    }
    OuterStepInfo { inner, eps, infeasibility, rho_increased }
}

#[derive(Debug)]
pub struct AuglagOutcome {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub omega: BlockVector,
    pub certificate: Akkt2Certificate,
    pub trace: IterateTrace,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Largest multiplier head observed while the corresponding block sat
    /// outside both cones; a diagnostic for the boundedness hypothesis
    /// behind the second-order guarantee.
    pub max_omega_head_outside: f64,
}

/// Full outer loop. Stops when stationarity, feasibility and
/// complementarity all reach `target_tol`, or on a cap/stall.
pub fn solve(
    problem: &Problem,
    config: &AuglagConfig,
    x0: &[f64],
) -> Result<AuglagOutcome, AuglagError> {
    config.validate()?;
    let mut state = AuglagState::start(problem, config, x0.to_vec());
    let mut certificate = Akkt2Certificate::new();
    let mut trace = IterateTrace::new(problem.name(), "auglag", 0);
    let mut status = SolveStatus::IterationCap;
    let mut max_head_outside = 0.0f64;

    for _ in 0..config.max_outer {
        let hat_mu_used = state.hat_mu.clone();
        let hat_omega_used = state.hat_omega.clone();
        let rho_used = state.rho;
        let info = outer_step(&mut state, problem, config);
        let converged_inner = info.inner.status == NewtonStatus::Converged;

        let row = certify_iterate_local_sets(
            problem,
            state.k,
            &state.x,
            &state.mu,
            &state.omega,
            rho_used,
            config.cert_eps_active,
            converged_inner,
        )?;
        let stationarity = row.stationarity;
        let feasibility = row.r_v;
        let complementarity = row.akkt_comp;
        certificate.push(row);

        trace.push(TraceRow {
            k: state.k,
            rho: rho_used,
            x: state.x.clone(),
            mu: state.mu.clone(),
            omega: state.omega.as_slice().to_vec(),
            eps: Some(info.eps),
            hat_mu: Some(hat_mu_used),
            hat_omega: Some(hat_omega_used.as_slice().to_vec()),
            inner_min_eig: Some(info.inner.hess_min_eig),
            class: None,
        });

        let g = problem.cone_values(&state.x);
        for i in 0..problem.cone().block_count() {
            if g.block(i).len() >= 2
                && classify(g.block(i), 1e-12) == ConeRegion::Outside
            {
                max_head_outside = max_head_outside.max(state.omega.head(i));
            }
        }

        if !converged_inner {
            status = SolveStatus::InnerStall;
            break;
        }
        if stationarity <= config.target_tol
            && feasibility <= config.target_tol
            && complementarity <= config.target_tol
        {
            status = SolveStatus::Converged;
            break;
        }
        if state.rho > config.rho_cap {
            status = SolveStatus::InfeasibleStationary;
            break;
        }
    }

    Ok(AuglagOutcome {
        x: state.x,
        mu: state.mu,
        omega: state.omega,
        certificate,
        trace,
        status,
        iterations: state.k,
        max_omega_head_outside: max_head_outside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::model::{builtin, Problem, ProblemSpecFile};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn zeros_like(p: &Problem) -> (Vec<f64>, BlockVector) {
        (vec![0.0; p.equality_count()], BlockVector::zeros(p.cone().clone()))
    }

    #[test]
    fn value_is_objective_at_feasible_interior_point() {
        let p = builtin("interior_qp").unwrap();
        let (hm, ho) = zeros_like(&p);
        let x = [1.0, 0.25];
        let v = auglag_value(&p, &x, &hm, &ho, 3.0);
        assert!((v - p.objective_value(&x)).abs() <= 1e-14);
    }

    #[test]
    fn value_scalar_soc_infeasible_point() {
        let p = builtin("scalar_soc").unwrap();
        let (hm, ho) = zeros_like(&p);
        // Pi(-2 (0,1)) = (1,-1): value = 0 + (1/4) * 2 = 0.5.
        let v = auglag_value(&p, &[0.0], &hm, &ho, 2.0);
        assert!((v - 0.5).abs() <= 1e-14);
    }

    #[test]
    fn value_monotone_in_rho_at_infeasible_point() {
        let p = builtin("scalar_soc").unwrap();
        let (hm, ho) = zeros_like(&p);
        let mut last = f64::NEG_INFINITY;
        for k in 0..20 {
            let rho = 0.5 * 1.5f64.powi(k);
            let v = auglag_value(&p, &[0.0], &hm, &ho, rho);
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn gradient_matches_finite_differences_off_kinks() {
        let mut rng = StdRng::seed_from_u64(41);
        let h = 1e-6;
        for name in ["scalar_soc", "paper_example", "rotated_cone"] {
            let p = builtin(name).unwrap();
            let mut checked = 0;
            while checked < 40 {
                let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let rho = rng.gen_range(0.5..5.0);
                let (hm, mut ho) = zeros_like(&p);
                if rng.gen_bool(0.5) {
                    // Random safeguarded omega inside K.
                    for i in 0..p.cone().block_count() {
                        let b = ho.block_mut(i);
                        if b.len() >= 2 {
                            for t in b.iter_mut().skip(1) {
                                *t = rng.gen_range(-0.5..0.5);
                            }
                            b[0] = 1.0;
                        } else {
                            b[0] = rng.gen_range(0.0..1.0);
                        }
                    }
                }
                // Skip points near projection kinks.
                let g = p.cone_values(&x);
                let mut near_kink = false;
                for i in 0..p.cone().block_count() {
                    let shifted: Vec<f64> = ho
                        .block(i)
                        .iter()
                        .zip(g.block(i))
                        .map(|(o, gv)| o - rho * gv)
                        .collect();
                    let (e1, e2) = if shifted.len() == 1 {
                        (shifted[0], shifted[0])
                    } else {
                        let t = norm(&shifted[1..]);
                        (shifted[0] - t, shifted[0] + t)
                    };
                    if e1.abs() <= 1e-3 || e2.abs() <= 1e-3 {
                        near_kink = true;
                    }
                }
                if near_kink {
                    continue;
                }
                checked += 1;
                let grad = auglag_grad(&p, &x, &hm, &ho, rho);
                for i in 0..p.dim() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (auglag_value(&p, &xp, &hm, &ho, rho)
                        - auglag_value(&p, &xm, &hm, &ho, rho))
                        / (2.0 * h);
                    assert!(
                        (fd - grad[i]).abs() <= 1e-5 * (1.0 + grad[i].abs()),
                        "{name}: x={x:?} i={i} fd={fd} grad={}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_equals_lagrangian_at_implied_multipliers_exactly() {
        let mut rng = StdRng::seed_from_u64(42);
        let p = builtin("rotated_cone").unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let hm = vec![rng.gen_range(-2.0..2.0)];
            let ho = BlockVector::new(
                p.cone().clone(),
                vec![rng.gen_range(0.5..2.0), 0.0, 0.0],
            );
            let rho = rng.gen_range(0.5..4.0);
            let grad = auglag_grad(&p, &x, &hm, &ho, rho);
            let (mu, omega) = implied_multipliers(&p, &x, &hm, &ho, rho);
            let data = p.eval_lagrangian_data(&x, &mu, &omega).unwrap();
            assert_eq!(grad, data.grad_l);
        }
    }

    #[test]
    fn surrogate_reduces_to_classical_equality_hessian() {
        // Equality-only problem: surrogate = hess f + sum (rho h - m̂u)_i
        // hess h_i + rho grad h grad h^T.
        let spec = ProblemSpecFile {
            name: Some("eq_only".into()),
            n: 2,
            objective: "x1^2 + x1*x2 + x2^2".into(),
            equalities: vec!["x1 + x2 - 1".into(), "x1^2 - x2".into()],
            cones: vec![vec!["1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let x = [0.4, 0.7];
        let hm = vec![0.3, -0.2];
        let ho = BlockVector::zeros(p.cone().clone());
        let rho = 2.5;
        let s = surrogate_hessian(&p, &x, &hm, &ho, rho);

        let h = p.equality_values(&x);
        let dh = p.equality_jacobian(&x);
        let mut expect = p.objective_hessian(&x);
        for i in 0..2 {
            expect.add_assign_scaled(&p.equality_hessian(i, &x), rho * h[i] - hm[i]);
            expect.rank_one_update(dh.row(i), rho);
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.get(i, j) - expect.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn surrogate_matches_fd_of_gradient_off_kinks() {
        // With zero safeguarded multipliers the selection region of
        // -rho g matches the true projection derivative at kink-free
        // points, so finite differences of the gradient see the surrogate.
        let p = builtin("paper_example").unwrap();
        let (hm, ho) = zeros_like(&p);
        let h = 1e-6;
        for (x, rho) in [([1.2, 1.2], 2.0), ([0.5, 0.5], 1.5), ([1.05, 0.9], 3.0)] {
            let s = surrogate_hessian(&p, &x, &hm, &ho, rho);
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let gp = auglag_grad(&p, &xp, &hm, &ho, rho);
                let gm = auglag_grad(&p, &xm, &hm, &ho, rho);
                for i in 0..2 {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!(
                        (fd - s.get(i, j)).abs() <= 1e-4 * (1.0 + fd.abs()),
                        "x={x:?} rho={rho}: fd {fd} vs surrogate {}",
                        s.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn outer_step_fixed_point_keeps_rho() {
        // At the solution with exact multipliers, v = 0 and rho is kept.
        let p = builtin("scalar_soc").unwrap();
        let config = AuglagConfig::default();
        let mut state = AuglagState::start(&p, &config, vec![1.0]);
        state.hat_omega = BlockVector::new(p.cone().clone(), vec![1.0, -1.0]);
        state.prev_infeasibility = 1e-3;
        let info = outer_step(&mut state, &p, &config);
        assert!(info.infeasibility <= 1e-9);
        assert!(!info.rho_increased);
        assert!(state.omega.in_cone(1e-12));
    }

    #[test]
    fn penalty_rule_fires_when_infeasibility_stalls() {
        let p = builtin("scalar_soc").unwrap();
        let config = AuglagConfig { eps0: 1e-6, ..Default::default() };
        let mut state = AuglagState::start(&p, &config, vec![0.0]);
        // Pretend the previous iteration was already very feasible.
        state.prev_infeasibility = 1e-12;
        let rho_before = state.rho;
        let info = outer_step(&mut state, &p, &config);
        assert!(info.rho_increased);
        assert_eq!(state.rho, rho_before * config.gamma);
    }

    #[test]
    fn solve_scalar_soc_converges() {
        let p = builtin("scalar_soc").unwrap();
        let config = AuglagConfig { target_tol: 1e-8, ..Default::default() };
        let out = solve(&p, &config, &[0.0]).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!((out.x[0] - 1.0).abs() <= 1e-6, "x = {:?}", out.x);
        let last = out.certificate.last().unwrap();
        assert!(last.stationarity <= 1e-8);
        assert!(last.r_v <= 1e-8);
        assert!(out.omega.in_cone(1e-10));
        // omega approaches (1, -1).
        assert!((out.omega.as_slice()[0] - 1.0).abs() <= 1e-4);
        assert!((out.omega.as_slice()[1] + 1.0).abs() <= 1e-4);
    }

    #[test]
    fn solve_recertifies_every_inner_exit() {
        let p = builtin("scalar_soc").unwrap();
        let config = AuglagConfig::default();
        let out = solve(&p, &config, &[0.0]).unwrap();
        for row in out.trace.rows() {
            let eps = row.eps.unwrap();
            let hat_mu = row.hat_mu.clone().unwrap();
            let hat_omega = BlockVector::new(p.cone().clone(), row.hat_omega.clone().unwrap());
            let grad = auglag_grad(&p, &row.x, &hat_mu, &hat_omega, row.rho);
            assert!(norm(&grad) <= eps + 1e-12, "k={}", row.k);
            let s = surrogate_hessian(&p, &row.x, &hat_mu, &hat_omega, row.rho);
            let lam = crate::linalg::min_eigenvalue(&s).unwrap();
            assert!(lam >= -eps - 1e-10, "k={}: lambda_min {lam} vs eps {eps}", row.k);
            // Step-4 identity: reported stationarity equals the inner
            // gradient norm exactly.
            let (mu, omega) = implied_multipliers(&p, &row.x, &hat_mu, &hat_omega, row.rho);
            assert_eq!(mu, row.mu);
            assert_eq!(omega.as_slice(), row.omega.as_slice());
            let data = p.eval_lagrangian_data(&row.x, &mu, &omega).unwrap();
            assert_eq!(data.grad_l, grad);
        }
    }

    #[test]
    fn solve_degenerate_eq_reaches_akkt_without_kkt() {
        let p = builtin("degenerate_eq").unwrap();
        let config = AuglagConfig { target_tol: 1e-7, max_outer: 120, ..Default::default() };
        let out = solve(&p, &config, &[1.0]).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        let last = out.certificate.last().unwrap();
        assert!(last.stationarity <= 1e-7);
        assert!(last.r_v <= 1e-7);
        assert!(out.x[0].abs() <= 1e-3);
        // The equality multiplier diverges along the sequence: no KKT
        // point exists at the limit.
        assert!(out.mu[0].abs() >= 1e2, "mu = {:?}", out.mu);
    }

    #[test]
    fn interior_solution_keeps_omega_zero_and_rho_fixed() {
        let p = builtin("interior_qp").unwrap();
        let config = AuglagConfig::default();
        let out = solve(&p, &config, &[0.0, 0.0]).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        for row in out.trace.rows() {
            assert!(row.omega.iter().all(|v| v.abs() <= 1e-12));
            assert_eq!(row.rho, config.rho0);
        }
        assert!((out.x[0] - 1.0).abs() <= 1e-6);
        assert!((out.x[1] - 0.25).abs() <= 1e-6);
    }

    #[test]
    fn negative_curvature_escape_through_inner_solve() {
        // Unconstrained saddle expressed as a Problem with an inactive
        // cone block; the inner solver must leave the origin.
        let spec = ProblemSpecFile {
            name: Some("saddle".into()),
            n: 2,
            objective: "x1^2 - x2^2 + 0.25 * x2^4".into(),
            equalities: vec![],
            cones: vec![vec!["1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        let (hm, ho) = zeros_like(&p);
        let res = inner_solve(&p, &[0.0, 0.0], &hm, &ho, 1.0, 1e-8, 300);
        assert_eq!(res.status, NewtonStatus::Converged);
        assert!(res.hess_min_eig >= -1e-8);
        assert!((res.x[1].abs() - 2.0f64.sqrt()).abs() <= 1e-6);
    }

    #[test]
    fn rotated_cone_solution_with_equality() {
        let p = builtin("rotated_cone").unwrap();
        let config = AuglagConfig { target_tol: 1e-8, ..Default::default() };
        let out = solve(&p, &config, &[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!((out.x[0] - 0.5).abs() <= 1e-5);
        assert!((out.x[1] - 0.5).abs() <= 1e-5);
        assert!((out.x[2] - 1.0).abs() <= 1e-6);
        assert!((out.mu[0] + 1.0).abs() <= 1e-4, "mu = {:?}", out.mu);
        let om = out.omega.as_slice();
        assert!((om[0] - 1.0).abs() <= 1e-4 && om[1].abs() <= 1e-4 && (om[2] + 1.0).abs() <= 1e-4);
        // Complementarity at the solution.
        let g = p.cone_values(&out.x);
        assert!(dot(g.as_slice(), om).abs() <= 1e-6);
    }
}
