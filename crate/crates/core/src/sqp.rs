//! Stabilized SQP with VOMF multiplier updates.
//!
//! Each iteration solves the proximal subproblem
//!
//! ```text
//! minimize <grad f - Dh^T s, xi> + (1/2)<M xi, xi> + (rho/2)‖chi‖^2
//! subject to Dg xi + rho (chi - t) in K
//! ```
//!
//! with `s = mu - h/rho`, `t = omega - g/rho`,
//! `M = H + (1/rho) grad h grad h^T`, takes an Armijo step on the merit
//! function, then classifies the iterate (V/O/M/F) to decide how the
//! multipliers move. The penalty weight is driven down by halving.
//!
//! Sign convention: the working equality multiplier `mu` follows the
//! stabilized-SQP formulas, in which the Lagrangian carries `-<h, mu>`.
//! Residual checkers in this crate define `L = f + <h, mu> - <g, omega>`,
//! so the multiplier reported outward (certificates, final result) is the
//! negation of the working copy. The stationary sets coincide; equality
//! multipliers are unsigned.

use serde::Serialize;
use thiserror::Error;

use crate::conditions::{
    boundary_constraint_row, first_order_residuals, index_sets, Akkt2Certificate, CertRow,
    ConditionsError,
};
use crate::linalg::{dot, min_eigenvalue, norm, sym_eigen, LinalgError, SymMatrix};
use crate::model::Problem;
use crate::soc::{jordan_product, project_block, project_cone, BlockVector};
use crate::subqp::{solve_subqp, SubQp, SubQpError};
use crate::trace::{IterateTrace, SolveStatus, TraceRow};

#[derive(Debug, Error)]
pub enum SqpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("search direction is not a descent direction (delta = {delta:.3e})")]
    NoDescent { delta: f64 },
    #[error("backtracking line search exhausted its budget")]
    ExhaustedBacktracking,
    #[error(transparent)]
    Subproblem(#[from] SubQpError),
    #[error(transparent)]
    Conditions(#[from] ConditionsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct SqpConfig {
    /// Armijo slope fraction, in (0, 1).
    pub tau: f64,
    /// Declared by the method statement but never consulted by it; kept
    /// for interface fidelity.
    pub alpha: f64,
    /// Backtracking factor, in (0, 1).
    pub beta: f64,
    /// Weight mixing the violation and optimality measures, in (0, 1).
    pub kappa: f64,
    pub mu_max: f64,
    pub omega_max: f64,
    pub phi0: f64,
    pub psi0: f64,
    pub gamma0: f64,
    pub rho0: f64,
    pub rho_floor: f64,
    pub eps0: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    /// Freeze the eps schedule once the relaxed active sets are stable
    /// for this many consecutive iterations.
    pub active_freeze_window: usize,
    /// Eigenvalue floor and cap for the Hessian model.
    pub nu1: f64,
    pub nu2: f64,
    /// Tolerance standing in for the exact zero test on the merit
    /// gradient.
    pub grad_zero_tol: f64,
    pub subqp_tol: f64,
    pub subqp_cap: usize,
    pub ls_cap: usize,
    pub max_iter: usize,
    pub target_tol: f64,
    pub cert_eps_active: f64,
}

impl Default for SqpConfig {
    fn default() -> Self {
        SqpConfig {
            tau: 0.5,
            alpha: 0.5,
            beta: 0.5,
            kappa: 0.9,
            mu_max: 1e8,
            omega_max: 1e8,
            phi0: 10.0,
            psi0: 10.0,
            gamma0: 10.0,
            rho0: 1.0,
            rho_floor: 1e-12,
            eps0: 1e-2,
            eps_decay: 0.5,
            eps_floor: 1e-6,
            active_freeze_window: 5,
            nu1: 1e-6,
            nu2: 1e6,
            grad_zero_tol: 1e-12,
            subqp_tol: 1e-9,
            subqp_cap: 8000,
            ls_cap: 60,
            max_iter: 200,
            target_tol: 1e-8,
            cert_eps_active: 1e-6,
        }
    }
}

impl SqpConfig {
    pub fn validate(&self) -> Result<(), SqpError> {
        let unit = |v: f64, name: &str| -> Result<(), SqpError> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(SqpError::InvalidConfig(format!("{name} must lie in (0, 1)")))
            }
        };
        unit(self.tau, "tau")?;
        unit(self.alpha, "alpha")?;
        unit(self.beta, "beta")?;
        unit(self.kappa, "kappa")?;
        for (v, name) in [
            (self.mu_max, "mu_max"),
            (self.omega_max, "omega_max"),
            (self.phi0, "phi0"),
            (self.psi0, "psi0"),
            (self.gamma0, "gamma0"),
            (self.rho0, "rho0"),
        ] {
            if !(v > 0.0) {
                return Err(SqpError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// VOMF iterate classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IterClass {
    V,
    O,
    M,
    F,
}

impl IterClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            IterClass::V => "V",
            IterClass::O => "O",
            IterClass::M => "M",
            IterClass::F => "F",
        }
    }
}

/// Violation and optimality measures of one candidate triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptimalityMeasures {
    pub r_v: f64,
    pub r_o: f64,
    pub phi: f64,
    pub psi: f64,
    /// The eigenvalue contribution max{lambda_max(-P), 0} inside r_O.
    pub p_eig_term: f64,
    /// Smallest eigenvalue of the P matrix itself.
    pub p_min_eig: f64,
}

/// Stabilization data `(s, t, M)` for the subproblem at `(x, mu, omega)`.
/// `mu` is the working-convention multiplier.
pub fn stab_params(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
    rho: f64,
    h_model: &SymMatrix,
) -> (Vec<f64>, BlockVector, SymMatrix) {
    assert!(rho > 0.0);
    let h = problem.equality_values(x);
    let s: Vec<f64> = mu.iter().zip(&h).map(|(m, hv)| m - hv / rho).collect();
    let g = problem.cone_values(x);
    let t = BlockVector::new(
        problem.cone().clone(),
        omega
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(o, gv)| o - gv / rho)
            .collect(),
    );
    let mut m_mat = h_model.clone();
    let dh = problem.equality_jacobian(x);
    for i in 0..problem.equality_count() {
        m_mat.rank_one_update(dh.row(i), 1.0 / rho);
    }
    (s, t, m_mat)
}

/// The P matrix of the optimality measure:
///
/// ```text
/// P = hess_L - sum_{i in I_BB,eps} ([omega_i]_0/[g_i]_0) Dg_i^T Gamma Dg_i
///   + (1/rho) [ sum_i grad h_i grad h_i^T
///             + sum_{i in I_0,eps} Dg_i^T Dg_i
///             + sum_{i in I_B,eps} (Dg_i^T Gamma g~_i)(Dg_i^T Gamma g~_i)^T ]
/// ```
///
/// `mu` here is the reported-convention multiplier (the checkers' one).
pub fn optimality_matrix(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
    rho: f64,
    eps: f64,
) -> Result<SymMatrix, ConditionsError> {
    assert!(rho > 0.0 && eps > 0.0);
    let sets = index_sets(problem, x, eps, eps, Some(omega));
    let data = problem.eval_lagrangian_data(x, mu, omega)?;
    let mut p = data.hess_l;
    for &i in &sets.eps_bb {
        let head = data.g.head(i);
        if head <= 0.0 {
            return Err(ConditionsError::InvalidBlock {
                index: i,
                reason: "doubly-active block needs a positive head".into(),
            });
        }
        let m = problem.cone().block_dim(i);
        let dgi = problem.cone_block_jacobian(i, x);
        let gamma = crate::soc::gamma_matrix(m);
        let congr = SymMatrix::congruence(&gamma, &dgi);
        p.add_assign_scaled(&congr, -omega.head(i) / head);
    }
    for i in 0..problem.equality_count() {
        p.rank_one_update(data.dh.row(i), 1.0 / rho);
    }
    for &i in &sets.eps_zero {
        let dgi = problem.cone_block_jacobian(i, x);
        p.add_assign_scaled(&SymMatrix::gram(&dgi), 1.0 / rho);
    }
    for &i in &sets.eps_boundary {
        let v = boundary_constraint_row(problem, x, i);
        p.rank_one_update(&v, 1.0 / rho);
    }
    Ok(p)
}

/// The optimality measure r_O: stationarity plus summed Jordan products
/// plus the negative-curvature term of the P matrix. `mu` is in the
/// reported convention.
pub fn r_o_measure(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
    rho: f64,
    eps: f64,
) -> Result<(f64, f64, f64), ConditionsError> {
    let data = problem.eval_lagrangian_data(x, mu, omega)?;
    let mut jordan_sum = 0.0;
    for i in 0..problem.cone().block_count() {
        jordan_sum += norm(&jordan_product(data.g.block(i), omega.block(i)));
    }
    let p = optimality_matrix(problem, x, mu, omega, rho, eps)?;
    let p_min = min_eigenvalue(&p)?;
    let eig_term = (-p_min).max(0.0);
    Ok((norm(&data.grad_l) + jordan_sum + eig_term, eig_term, p_min))
}

/// Full measure bundle at a candidate triple (reported-convention `mu`).
pub fn measures(
    problem: &Problem,
    x: &[f64],
    mu: &[f64],
    omega: &BlockVector,
    rho: f64,
    eps: f64,
    kappa: f64,
) -> Result<OptimalityMeasures, ConditionsError> {
    let r_v = crate::conditions::feasibility_residual(problem, x);
    let (r_o, p_eig_term, p_min_eig) = r_o_measure(problem, x, mu, omega, rho, eps)?;
    Ok(OptimalityMeasures {
        r_v,
        r_o,
        phi: r_v + kappa * r_o,
        psi: kappa * r_v + r_o,
        p_eig_term,
        p_min_eig,
    })
}

/// Merit function `f + (1/2rho)‖rho mu - h‖^2 + (1/2rho)‖Pi(rho omega - g)‖^2`
/// (working-convention `mu`).
pub fn merit_value(
    problem: &Problem,
    x: &[f64],
    rho: f64,
    mu: &[f64],
    omega: &BlockVector,
) -> f64 {
    assert!(rho > 0.0);
    let h = problem.equality_values(x);
    let g = problem.cone_values(x);
    let mut acc = 0.0;
    for (m, hv) in mu.iter().zip(&h) {
        let d = rho * m - hv;
        acc += d * d;
    }
    for i in 0..problem.cone().block_count() {
        let shifted: Vec<f64> = omega
            .block(i)
            .iter()
            .zip(g.block(i))
            .map(|(o, gv)| rho * o - gv)
            .collect();
        let proj = project_block(&shifted);
        acc += proj.iter().map(|v| v * v).sum::<f64>();
    }
    problem.objective_value(x) + acc / (2.0 * rho)
}

/// Gradient of the merit function, i.e. of the expression above:
/// `grad f - Dh^T (mu - h/rho) - Dg^T Pi(omega - g/rho)`.
pub fn merit_grad(
    problem: &Problem,
    x: &[f64],
    rho: f64,
    mu: &[f64],
    omega: &BlockVector,
) -> Vec<f64> {
    let h = problem.equality_values(x);
    let g = problem.cone_values(x);
    let dh = problem.equality_jacobian(x);
    let dg = problem.cone_jacobian(x);
    let mut grad = problem.objective_gradient(x);
    let wh: Vec<f64> = mu.iter().zip(&h).map(|(m, hv)| m - hv / rho).collect();
    let dh_term = dh.tr_matvec(&wh);
    let mut proj_all = Vec::with_capacity(g.as_slice().len());
    for i in 0..problem.cone().block_count() {
        let shifted: Vec<f64> = omega
            .block(i)
            .iter()
            .zip(g.block(i))
            .map(|(o, gv)| o - gv / rho)
            .collect();
        proj_all.extend(project_block(&shifted));
    }
    let dg_term = dg.tr_matvec(&proj_all);
    for i in 0..grad.len() {
        grad[i] -= dh_term[i] + dg_term[i];
    }
    grad
}

/// Armijo backtracking on the merit function. Requires a descent
/// direction; NaN trial values count as rejections.
pub fn line_search(
    problem: &Problem,
    x: &[f64],
    p_dir: &[f64],
    rho: f64,
    mu: &[f64],
    omega: &BlockVector,
    tau: f64,
    beta: f64,
    cap: usize,
) -> Result<(usize, Vec<f64>), SqpError> {
    let delta = dot(&merit_grad(problem, x, rho, mu, omega), p_dir);
    if !(delta < 0.0) {
        return Err(SqpError::NoDescent { delta });
    }
    let f0 = merit_value(problem, x, rho, mu, omega);
    let mut step = 1.0;
    for ell in 0..cap {
        let xt: Vec<f64> = x.iter().zip(p_dir).map(|(a, d)| a + step * d).collect();
        let ft = merit_value(problem, &xt, rho, mu, omega);
        if ft.is_finite() && ft <= f0 + tau * step * delta {
            return Ok((ell, xt));
        }
        step *= beta;
    }
    Err(SqpError::ExhaustedBacktracking)
}

fn clamp_box(v: &mut [f64], cap: f64) {
    for x in v.iter_mut() {
        *x = x.clamp(-cap, cap);
    }
}

/// Projection onto the box-capped cone set by alternating projections,
/// finishing on the cone so membership in K is guaranteed.
fn project_box_cone(v: &BlockVector, cap: f64) -> BlockVector {
    let mut z = v.clone();
    for _ in 0..100 {
        let mut w = z.as_slice().to_vec();
        clamp_box(&mut w, cap);
        let boxed = BlockVector::new(v.cone().clone(), w);
        let coned = project_cone(&boxed);
        let change: f64 = coned
            .as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        z = coned;
        if change <= 1e-12 {
            break;
        }
    }
    z
}

/// Per-iteration log used by replay checks.
#[derive(Debug, Clone, Serialize)]
pub struct SqpIterationLog {
    pub k: usize,
    pub class: IterClass,
    pub step2_shortcut: bool,
    pub rho_before: f64,
    pub rho_after: f64,
    pub phi_before: f64,
    pub phi_after: f64,
    pub psi_before: f64,
    pub psi_after: f64,
    pub gamma_before: f64,
    pub gamma_after: f64,
    /// Phi and Psi evaluated at the candidate triple.
    pub phi_value: f64,
    pub psi_value: f64,
    /// ‖grad F(x_{k+1}; rho_k, mu_k, omega_k)‖ with the old multipliers.
    pub merit_grad_old: f64,
    pub r_v: f64,
    pub r_o: f64,
    pub eps: f64,
    pub subqp_residual: Option<f64>,
    pub ls_ell: Option<usize>,
    pub merit_before: f64,
    pub merit_after: f64,
}

#[derive(Debug)]
pub struct SqpOutcome {
    pub x: Vec<f64>,
    /// Reported-convention multipliers.
    pub mu: Vec<f64>,
    pub omega: BlockVector,
    pub certificate: Akkt2Certificate,
    pub trace: IterateTrace,
    pub log: Vec<SqpIterationLog>,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Exact Lagrangian Hessian with the eigenvalue floor/cap required of the
/// model matrix.
fn hessian_model(
    problem: &Problem,
    x: &[f64],
    mu_rep: &[f64],
    omega: &BlockVector,
    nu1: f64,
    nu2: f64,
) -> Result<SymMatrix, SqpError> {
    let data = problem.eval_lagrangian_data(x, mu_rep, omega).map_err(ConditionsError::from)?;
    let mut h = data.hess_l;
    let eig = sym_eigen(&h)?;
    let shift = (nu1 - eig.values[0]).max(0.0) + nu1;
    h.add_diag(shift);
    if eig.values.last().unwrap() + shift > nu2 {
        // Rebuild with eigenvalues clamped at the cap.
        let n = h.order();
        let mut rebuilt = SymMatrix::zeros(n);
        for j in 0..n {
            let lam = (eig.values[j] + shift).min(nu2);
            rebuilt.rank_one_update(&eig.eigenvector(j), lam);
        }
        h = rebuilt;
    }
    Ok(h)
}

/// Runs the stabilized SQP loop. `mu0` is in the reported convention;
/// `omega0` must lie in K.
pub fn solve(
    problem: &Problem,
    config: &SqpConfig,
    x0: &[f64],
    mu0: &[f64],
    omega0: &BlockVector,
) -> Result<SqpOutcome, SqpError> {
    config.validate()?;
    assert!(omega0.in_cone(1e-9), "omega0 must lie in the cone");

    let mut x = x0.to_vec();
    // Working-convention multiplier.
    let mut mu_w: Vec<f64> = mu0.iter().map(|m| -m).collect();
    let mut omega = project_cone(omega0);
    let mut rho = config.rho0;
    let mut phi = config.phi0;
    let mut psi = config.psi0;
    let mut gamma = config.gamma0;
    let mut eps = config.eps0;
    let mut eps_frozen = false;
    let mut stable_count = 0usize;
    let mut last_active: Option<(Vec<usize>, Vec<usize>)> = None;

    let mut certificate = Akkt2Certificate::new();
    let mut trace = IterateTrace::new(problem.name(), "sqp", 0);
    let mut log: Vec<SqpIterationLog> = Vec::new();
    let mut status = SolveStatus::IterationCap;
    let mut iterations = 0;

    for k in 0..config.max_iter {
        iterations = k;
        let mu_rep: Vec<f64> = mu_w.iter().map(|m| -m).collect();
        let meas = measures(problem, &x, &mu_rep, &omega, rho, eps, config.kappa)?;
        if meas.r_v + meas.r_o <= config.target_tol {
            status = SolveStatus::Converged;
            break;
        }

        let merit_before = merit_value(problem, &x, rho, &mu_w, &omega);
        let grad_f_norm = norm(&merit_grad(problem, &x, rho, &mu_w, &omega));
        let h_vals = problem.equality_values(&x);
        let g_vals = problem.cone_values(&x);

        let (x1, bar_mu_w, bar_omega, subqp_residual, ls_ell, step2);
        if grad_f_norm <= config.grad_zero_tol {
            // Stationary shortcut: proximal multiplier candidates, no step.
            step2 = true;
            x1 = x.clone();
            bar_mu_w = mu_w
                .iter()
                .zip(&h_vals)
                .map(|(m, hv)| m - hv / rho)
                .collect::<Vec<f64>>();
            let shifted = BlockVector::new(
                problem.cone().clone(),
                omega
                    .as_slice()
                    .iter()
                    .zip(g_vals.as_slice())
                    .map(|(o, gv)| o - gv / rho)
                    .collect(),
            );
            bar_omega = project_cone(&shifted);
            subqp_residual = None;
            ls_ell = None;
        } else {
            step2 = false;
            let h_model = hessian_model(problem, &x, &mu_rep, &omega, config.nu1, config.nu2)?;
            let (s, t, m_mat) = stab_params(problem, &x, &mu_w, &omega, rho, &h_model);
            let dh = problem.equality_jacobian(&x);
            let mut c = problem.objective_gradient(&x);
            let dhs = dh.tr_matvec(&s);
            for (ci, v) in c.iter_mut().zip(&dhs) {
                *ci -= v;
            }
            let q = SubQp {
                c,
                m_mat,
                rho,
                dg: problem.cone_jacobian(&x),
                shift: t,
            };
            let sol = match solve_subqp(&q, config.subqp_tol, config.subqp_cap) {
                Ok(s) => s,
                Err(e) => {
                    log_push_failure(&mut log, k, rho, phi, psi, gamma, &meas, eps);
                    let _ = e;
                    status = SolveStatus::SubproblemFailure;
                    break;
                }
            };
            subqp_residual = Some(sol.kkt_residual);
            let p_dir = sol.xi.clone();
            bar_mu_w = {
                let dh_xi = dh.matvec(&p_dir);
                mu_w.iter()
                    .zip(&h_vals)
                    .zip(&dh_xi)
                    .map(|((m, hv), dxi)| m - (hv + dxi) / rho)
                    .collect()
            };
            bar_omega = project_cone(&sol.chi);

            if norm(&p_dir) <= 1e-15 * (1.0 + norm(&x)) {
                x1 = x.clone();
                ls_ell = None;
            } else {
                match line_search(
                    problem,
                    &x,
                    &p_dir,
                    rho,
                    &mu_w,
                    &omega,
                    config.tau,
                    config.beta,
                    config.ls_cap,
                ) {
                    Ok((ell, xt)) => {
                        ls_ell = Some(ell);
                        x1 = xt;
                    }
                    Err(SqpError::NoDescent { delta }) if delta.abs() <= 1e-12 => {
                        // Numerically flat direction near a stationary
                        // point of the merit: take a null step.
                        ls_ell = None;
                        x1 = x.clone();
                    }
                    Err(_) => {
                        status = SolveStatus::InnerStall;
                        break;
                    }
                }
            }
        }

        // VOMF classification. Candidate measures use the reported
        // convention; the M test uses the old multipliers.
        let bar_mu_rep: Vec<f64> = bar_mu_w.iter().map(|m| -m).collect();
        let cand = measures(problem, &x1, &bar_mu_rep, &bar_omega, rho, eps, config.kappa)?;
        let merit_grad_old = norm(&merit_grad(problem, &x1, rho, &mu_w, &omega));

        let (phi_before, psi_before, gamma_before, rho_before) = (phi, psi, gamma, rho);
        let class;
        if cand.phi <= 0.5 * phi {
            class = IterClass::V;
            mu_w = bar_mu_w;
            omega = bar_omega;
            phi *= 0.5;
        } else if cand.psi <= 0.5 * psi {
            class = IterClass::O;
            mu_w = bar_mu_w;
            omega = bar_omega;
            psi *= 0.5;
        } else if merit_grad_old <= gamma {
            class = IterClass::M;
            let h1 = problem.equality_values(&x1);
            for (m, hv) in mu_w.iter_mut().zip(&h1) {
                *m -= hv / rho;
            }
            clamp_box(&mut mu_w, config.mu_max);
            let g1 = problem.cone_values(&x1);
            let shifted = BlockVector::new(
                problem.cone().clone(),
                omega
                    .as_slice()
                    .iter()
                    .zip(g1.as_slice())
                    .map(|(o, gv)| o - gv / rho)
                    .collect(),
            );
            omega = project_box_cone(&shifted, config.omega_max);
            gamma *= 0.5;
        } else {
            class = IterClass::F;
        }

        // Penalty halving, tested with the iteration-k threshold.
        if merit_grad_old <= gamma_before {
            rho = (0.5 * rho).max(config.rho_floor);
        }

        let merit_after = merit_value(problem, &x1, rho_before, &mu_w, &omega);
        log.push(SqpIterationLog {
            k,
            class,
            step2_shortcut: step2,
            rho_before,
            rho_after: rho,
            phi_before,
            phi_after: phi,
            psi_before,
            psi_after: psi,
            gamma_before,
            gamma_after: gamma,
            phi_value: cand.phi,
            psi_value: cand.psi,
            merit_grad_old,
            r_v: cand.r_v,
            r_o: cand.r_o,
            eps,
            subqp_residual,
            ls_ell,
            merit_before,
            merit_after,
        });

        // Certificate row at the updated triple.
        let mu_rep_new: Vec<f64> = mu_w.iter().map(|m| -m).collect();
        let fo = first_order_residuals(problem, &x1, &mu_rep_new, &omega)?;
        let post = measures(problem, &x1, &mu_rep_new, &omega, rho_before, eps, config.kappa)?;
        certificate.push(CertRow {
            k,
            rho: rho_before,
            stationarity: fo.stationarity,
            r_v: fo.feasibility,
            akkt_comp: fo.akkt_complementarity,
            cakkt_comp: fo.cakkt_complementarity,
            so_residual: post.p_eig_term,
            min_eigenvalue: post.p_min_eig,
            params: None,
            x: x1.clone(),
            mu: mu_rep_new.clone(),
            omega: omega.as_slice().to_vec(),
            converged: true,
            class: Some(class.as_str().to_string()),
        });
        trace.push(TraceRow {
            k,
            rho: rho_before,
            x: x1.clone(),
            mu: mu_rep_new,
            omega: omega.as_slice().to_vec(),
            eps: Some(eps),
            hat_mu: None,
            hat_omega: None,
            inner_min_eig: None,
            class: Some(class.as_str().to_string()),
        });

        // Epsilon schedule with an active-set stability freeze.
        let sets_now = index_sets(problem, &x1, eps, eps, Some(&omega));
        let signature = (sets_now.eps_zero.clone(), sets_now.eps_boundary.clone());
        match &last_active {
            Some(prev) if *prev == signature => stable_count += 1,
            _ => stable_count = 0,
        }
        last_active = Some(signature);
        if stable_count >= config.active_freeze_window {
            eps_frozen = true;
        }
        if !eps_frozen {
            eps = (eps * config.eps_decay).max(config.eps_floor);
        }

        x = x1;
    }

    let mu_rep: Vec<f64> = mu_w.iter().map(|m| -m).collect();
    Ok(SqpOutcome {
        x,
        mu: mu_rep,
        omega,
        certificate,
        trace,
        log,
        status,
        iterations,
    })
}

fn log_push_failure(
    log: &mut Vec<SqpIterationLog>,
    k: usize,
    rho: f64,
    phi: f64,
    psi: f64,
    gamma: f64,
    meas: &OptimalityMeasures,
    eps: f64,
) {
    log.push(SqpIterationLog {
        k,
        class: IterClass::F,
        step2_shortcut: false,
        rho_before: rho,
        rho_after: rho,
        phi_before: phi,
        phi_after: phi,
        psi_before: psi,
        psi_after: psi,
        gamma_before: gamma,
        gamma_after: gamma,
        phi_value: meas.phi,
        psi_value: meas.psi,
        merit_grad_old: f64::NAN,
        r_v: meas.r_v,
        r_o: meas.r_o,
        eps,
        subqp_residual: None,
        ls_ell: None,
        merit_before: f64::NAN,
        merit_after: f64::NAN,
    });
}
