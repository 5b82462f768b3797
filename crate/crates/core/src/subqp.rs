//! Convex conic-quadratic subproblem solver:
//!
//! ```text
//! minimize    <c, xi> + (1/2) <M xi, xi> + (rho/2) ‖chi‖^2
//! subject to  Dg xi + rho (chi - t) in K
//! ```
//!
//! with `M` symmetric positive definite and `rho > 0`. The subproblem is
//! always strictly feasible: `(xi, chi) = (0, t + e0)` puts the constraint
//! image at `rho e0`, strictly interior blockwise.
//!
//! Solved by primal path-following on the log-det barrier
//! `-sum_i log(eta1 eta2)(y_i)` (plain `-log y` on scalar blocks), with
//! damped Newton steps on `(xi, chi)` and a fraction-to-boundary rule on
//! the constraint image. The multiplier is recovered as `lambda = chi`,
//! which the chi-stationarity equation `rho chi = rho lambda` makes exact.

use thiserror::Error;

use crate::linalg::{dot, norm, norm_inf, solve_spd, Mat, SymMatrix};
use crate::soc::{project_block, BlockVector, ConeProduct};

#[derive(Debug, Error)]
pub enum SubQpError {
    #[error("subproblem did not converge (best KKT residual {best_residual:.3e})")]
    NonConvergence { best_residual: f64 },
    #[error("bad subproblem data: {0}")]
    BadData(String),
}

/// Subproblem data. `dg` has one row per cone component; `shift` is the
/// blocked vector `t` in the constraint `Dg xi + rho (chi - t) in K`.
#[derive(Debug, Clone)]
pub struct SubQp {
    pub c: Vec<f64>,
    pub m_mat: SymMatrix,
    pub rho: f64,
    pub dg: Mat,
    pub shift: BlockVector,
}

#[derive(Debug, Clone)]
pub struct SubQpSolution {
    pub xi: Vec<f64>,
    pub chi: BlockVector,
    /// Conic multiplier; equals `chi` by the chi-stationarity equation.
    pub lambda: BlockVector,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// The guaranteed strictly feasible start `(0, t + e0)`.
pub fn initial_point(q: &SubQp) -> (Vec<f64>, BlockVector) {
    let xi = vec![0.0; q.c.len()];
    let mut chi = q.shift.clone();
    for i in 0..chi.cone().block_count() {
        chi.block_mut(i)[0] += 1.0;
    }
    (xi, chi)
}

fn constraint_image(q: &SubQp, xi: &[f64], chi: &BlockVector) -> BlockVector {
    let gx = q.dg.matvec(xi);
    let data: Vec<f64> = gx
        .iter()
        .zip(chi.as_slice())
        .zip(q.shift.as_slice())
        .map(|((a, c), t)| a + q.rho * (c - t))
        .collect();
    BlockVector::new(chi.cone().clone(), data)
}

/// True KKT residual of a candidate, with `lambda := chi`:
/// dual stationarity, primal/dual cone violations and blockwise
/// complementarity.
pub fn kkt_residual(q: &SubQp, xi: &[f64], chi: &BlockVector) -> f64 {
    let y = constraint_image(q, xi, chi);
    let mut stat = q.m_mat.matvec(xi);
    for (s, c) in stat.iter_mut().zip(&q.c) {
        *s += c;
    }
    let dgt = q.dg.tr_matvec(chi.as_slice());
    for (s, d) in stat.iter_mut().zip(&dgt) {
        *s -= d;
    }
    let mut res = norm_inf(&stat);
    for i in 0..y.cone().block_count() {
        let yb = y.block(i);
        let cb = chi.block(i);
        let eta1 = |z: &[f64]| if z.len() == 1 { z[0] } else { z[0] - norm(&z[1..]) };
        res = res.max((-eta1(yb)).max(0.0));
        res = res.max((-eta1(cb)).max(0.0));
        res = res.max(dot(yb, cb).abs());
    }
    res
}

struct BarrierEval {
    grad: Vec<f64>,
    hess: SymMatrix,
}

/// Barrier value at the image point; +inf outside the interior.
fn barrier_value(y: &BlockVector) -> f64 {
    let mut v = 0.0;
    for i in 0..y.cone().block_count() {
        let b = y.block(i);
        if b.len() == 1 {
            if b[0] <= 0.0 {
                return f64::INFINITY;
            }
            v -= b[0].ln();
        } else {
            let tail = norm(&b[1..]);
            let det = (b[0] - tail) * (b[0] + tail);
            if b[0] <= 0.0 || det <= 0.0 {
                return f64::INFINITY;
            }
            v -= det.ln();
        }
    }
    v
}

/// Gradient and Hessian of the barrier as functions of y, blockwise.
fn barrier_derivatives(y: &BlockVector) -> BarrierEval {
    let m = y.cone().total_dim();
    let mut grad = vec![0.0; m];
    let mut hess = SymMatrix::zeros(m);
    for i in 0..y.cone().block_count() {
        let o = y.cone().offset(i);
        let b = y.block(i);
        if b.len() == 1 {
            grad[o] = -1.0 / b[0];
            hess.set(o, o, 1.0 / (b[0] * b[0]));
        } else {
            let tail = norm(&b[1..]);
            let det = (b[0] - tail) * (b[0] + tail);
            // -grad log det = -(2/det) Gamma y
            let mut refl = vec![b[0]];
            refl.extend(b[1..].iter().map(|t| -t));
            for (k, r) in refl.iter().enumerate() {
                grad[o + k] = -2.0 / det * r;
            }
            // hess(-log det) = (4/det^2)(Gamma y)(Gamma y)^T - (2/det) Gamma
            for r in 0..b.len() {
                for c in r..b.len() {
                    let gamma_rc = if r != c {
                        0.0
                    } else if r == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    let v = 4.0 / (det * det) * refl[r] * refl[c] - 2.0 / det * gamma_rc;
                    hess.set(o + r, o + c, v);
                }
            }
        }
    }
    BarrierEval { grad, hess }
}

/// Largest step keeping `y + alpha dy` strictly interior; `f64::INFINITY`
/// when the whole ray stays interior.
fn max_step(y: &BlockVector, dy: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..y.cone().block_count() {
        let o = y.cone().offset(i);
        let b = y.block(i);
        let d = &dy[o..o + b.len()];
        if b.len() == 1 {
            if d[0] < 0.0 {
                alpha = alpha.min(-b[0] / d[0]);
            }
            continue;
        }
        // Head positivity.
        if d[0] < 0.0 {
            alpha = alpha.min(-b[0] / d[0]);
        }
        // det(alpha) = a alpha^2 + b alpha + c with c = det(y) > 0.
        let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
        let bq = 2.0 * (b[0] * d[0] - dot(&b[1..], &d[1..]));
        let c = (b[0] - norm(&b[1..])) * (b[0] + norm(&b[1..]));
        let roots = quadratic_roots(a, bq, c);
        for r in roots {
            if r > 0.0 {
                alpha = alpha.min(r);
            }
        }
    }
    alpha
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() <= 1e-300 {
        if b.abs() <= 1e-300 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * s);
    let mut out = vec![];
    if q != 0.0 {
        out.push(c / q);
    }
    out.push(q / a);
    out
}

/// Solves the subproblem to the requested KKT tolerance with at most
/// `cap` Newton iterations overall.
pub fn solve_subqp(q: &SubQp, tol: f64, cap: usize) -> Result<SubQpSolution, SubQpError> {
    let n = q.c.len();
    let m = q.shift.cone().total_dim();
    if q.m_mat.order() != n {
        return Err(SubQpError::BadData("M order must match the xi dimension".into()));
    }
    if q.dg.rows() != m || q.dg.cols() != n {
        return Err(SubQpError::BadData("Dg shape must be m x n".into()));
    }
    if !(q.rho > 0.0) {
        return Err(SubQpError::BadData("rho must be positive".into()));
    }
    // Detect a non-SPD quadratic term up front.
    if solve_spd(&q.m_mat, &vec![0.0; n]).is_err() {
        return Err(SubQpError::BadData("quadratic term M is not positive definite".into()));
    }

    let (mut xi, mut chi) = initial_point(q);
    let mut y = constraint_image(q, &xi, &chi);
    debug_assert!(barrier_value(&y).is_finite());

    let obj_scale = 1.0 + norm(&q.c) + q.rho * (1.0 + q.shift.norm());
    let mut nu = 0.125 * obj_scale;
    let nu_floor = (tol / 100.0).min(1e-10).max(1e-16);
    let mut best = kkt_residual(q, &xi, &chi);
    let mut iterations = 0;

    // J = [Dg  rho I], the Jacobian of the constraint image in (xi, chi).
    let mut j = Mat::zeros(m, n + m);
    for r in 0..m {
        for c in 0..n {
            j.set(r, c, q.dg.get(r, c));
        }
        j.set(r, n + r, q.rho);
    }

    'outer: loop {
        // Inner Newton loop for the current barrier weight.
        for _ in 0..40 {
            if iterations >= cap {
                break 'outer;
            }
            iterations += 1;

            let be = barrier_derivatives(&y);
            // Gradient of the barrier objective in z = (xi, chi).
            let mut grad = vec![0.0; n + m];
            let mxi = q.m_mat.matvec(&xi);
            for i in 0..n {
                grad[i] = q.c[i] + mxi[i];
            }
            for i in 0..m {
                grad[n + i] = q.rho * chi.as_slice()[i];
            }
            let jt = j.tr_matvec(&be.grad);
            for i in 0..n + m {
                grad[i] += nu * jt[i];
            }

            let gnorm = norm(&grad);
            if gnorm <= 1e-3 * nu + 1e-15 * obj_scale {
                break;
            }

            let mut hb = be.hess;
            hb.scale(nu);
            let mut hess = SymMatrix::congruence(&hb, &j);
            for r in 0..n {
                for c in r..n {
                    let v = hess.get(r, c) + q.m_mat.get(r, c);
                    hess.set(r, c, v);
                }
            }
            for i in 0..m {
                let v = hess.get(n + i, n + i) + q.rho;
                hess.set(n + i, n + i, v);
            }

            let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut reg = 0.0;
            let dz = loop {
                let mut h = hess.clone();
                if reg > 0.0 {
                    h.add_diag(reg);
                }
                match solve_spd(&h, &neg_grad) {
                    Ok(d) => break d,
                    Err(_) => {
                        reg = if reg == 0.0 { 1e-12 * (1.0 + hess.frobenius()) } else { reg * 100.0 };
                        if reg > 1e6 * (1.0 + hess.frobenius()) {
                            break 'outer;
                        }
                    }
                }
            };

            let dy = j.matvec(&dz);
            let amax = max_step(&y, &dy);
            let mut alpha = (0.995 * amax).min(1.0);
            // Armijo on the barrier objective.
            let value = |xi_t: &[f64], chi_t: &BlockVector, y_t: &BlockVector| -> f64 {
                let quad = dot(&q.c, xi_t)
                    + 0.5 * dot(xi_t, &q.m_mat.matvec(xi_t))
                    + 0.5 * q.rho * dot(chi_t.as_slice(), chi_t.as_slice());
                quad + nu * barrier_value(y_t)
            };
            let f0 = value(&xi, &chi, &y);
            let slope = dot(&grad, &dz);
            let mut accepted = false;
            for _ in 0..60 {
                let xi_t: Vec<f64> = xi.iter().zip(&dz[..n]).map(|(a, d)| a + alpha * d).collect();
                let chi_t = BlockVector::new(
                    chi.cone().clone(),
                    chi.as_slice()
                        .iter()
                        .zip(&dz[n..])
                        .map(|(a, d)| a + alpha * d)
                        .collect(),
                );
                let y_t = constraint_image(q, &xi_t, &chi_t);
                let ft = value(&xi_t, &chi_t, &y_t);
                if ft.is_finite() && ft <= f0 + 1e-4 * alpha * slope {
                    xi = xi_t;
                    chi = chi_t;
                    y = y_t;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        let res = kkt_residual(q, &xi, &chi);
        best = best.min(res);
        if res <= tol {
            return Ok(SubQpSolution {
                lambda: chi.clone(),
                xi,
                chi,
                kkt_residual: res,
                iterations,
            });
        }
        if nu <= nu_floor || iterations >= cap {
            break;
        }
        nu = (nu * 0.15).max(nu_floor);
    }

    let res = kkt_residual(q, &xi, &chi);
    if res <= tol {
        return Ok(SubQpSolution { lambda: chi.clone(), xi, chi, kkt_residual: res, iterations });
    }
    Err(SubQpError::NonConvergence { best_residual: best.min(res) })
}

/// Linearized-feasibility data for the interior-margin measure:
/// maximize `t` with `Dh d = 0`, `g_i + Dg_i d - t e0_i in K_i`,
/// `‖d‖_inf <= 1`.
#[derive(Debug, Clone)]
pub struct ConicFeasibilityProblem {
    pub dh: Mat,
    pub dg: Mat,
    pub g: BlockVector,
}

const FEAS_REG: f64 = 1e-14;
const FEAS_DIST_TOL: f64 = 1e-6;

/// Bisection on `t` over proximal feasibility subproblems. Returns the
/// certified margin and an attaining direction, resolved to about 1e-6.
pub fn solve_conic_feasibility(
    p: &ConicFeasibilityProblem,
    t_resolution: f64,
) -> Result<(f64, Vec<f64>), SubQpError> {
    let n = p.dg.cols();
    let r = p.g.cone().block_count();
    let peq = p.dh.rows();

    // Augmented cone: original blocks, then 2n box scalars, then 2p
    // equality scalars (h rows enforced as paired inequalities).
    let mut dims: Vec<usize> = p.g.cone().dims().to_vec();
    dims.extend(std::iter::repeat(1).take(2 * n + 2 * peq));
    let cone = ConeProduct::new(dims);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..p.dg.rows() {
        rows.push(p.dg.row(i).to_vec());
    }
    for jx in 0..n {
        let mut row = vec![0.0; n];
        row[jx] = -1.0;
        rows.push(row);
    }
    for jx in 0..n {
        let mut row = vec![0.0; n];
        row[jx] = 1.0;
        rows.push(row);
    }
    for i in 0..peq {
        rows.push(p.dh.row(i).to_vec());
    }
    for i in 0..peq {
        rows.push(p.dh.row(i).iter().map(|v| -v).collect());
    }
    let v_mat = Mat::from_rows(&rows, n);

    let shift_at = |t: f64| -> Vec<f64> {
        let mut w = Vec::with_capacity(cone.total_dim());
        for i in 0..r {
            let b = p.g.block(i);
            w.push(b[0] - t);
            w.extend_from_slice(&b[1..]);
        }
        w.extend(std::iter::repeat(1.0).take(2 * n));
        w.extend(std::iter::repeat(0.0).take(2 * peq));
        w
    };

    let eta1_min = (0..r)
        .map(|i| {
            let b = p.g.block(i);
            if b.len() == 1 {
                b[0]
            } else {
                b[0] - norm(&b[1..])
            }
        })
        .fold(f64::INFINITY, f64::min);
    let dg_scale = p.dg.frobenius() * (n as f64).sqrt();
    let mut lo = eta1_min - 1.0;
    let mut hi = eta1_min + 2.0 + 2.0 * dg_scale;

    let feasible = |t: f64| -> Result<(bool, Vec<f64>), SubQpError> {
        let w = shift_at(t);
        // Constraint V d + chi + w in K_aug, i.e. rho = 1 and shift -w.
        let q = SubQp {
            c: vec![0.0; n],
            m_mat: {
                let mut m = SymMatrix::zeros(n);
                m.add_diag(FEAS_REG);
                m
            },
            rho: 1.0,
            dg: v_mat.clone(),
            shift: BlockVector::new(cone.clone(), w.iter().map(|v| -v).collect()),
        };
        let sol = solve_subqp(&q, 1e-12, 4000)?;
        // Distance of V d + w to the augmented cone, measured directly.
        let img = v_mat.matvec(&sol.xi);
        let z: Vec<f64> = img.iter().zip(&w).map(|(a, b)| a + b).collect();
        let zb = BlockVector::new(cone.clone(), z);
        let mut dist_sq = 0.0;
        for i in 0..cone.block_count() {
            let b = zb.block(i);
            let proj = project_block(b);
            dist_sq += b.iter().zip(&proj).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        }
        let w_scale = 1.0 + norm_inf(&w);
        Ok((dist_sq.sqrt() <= FEAS_DIST_TOL * w_scale, sol.xi))
    };

    let (ok, mut d_best) = feasible(lo)?;
    if !ok {
        // d = 0 always certifies t = eta1_min - 1; a failure here means
        // the inner solver struggled, so report it.
        return Err(SubQpError::NonConvergence { best_residual: f64::INFINITY });
    }
    while hi - lo > t_resolution.max(1e-9) {
        let mid = 0.5 * (lo + hi);
        let (ok, d) = feasible(mid)?;
        if ok {
            lo = mid;
            d_best = d;
        } else {
            hi = mid;
        }
    }
    Ok((lo, d_best))
}
