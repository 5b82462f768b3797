//! Second-order inner minimizer shared by the augmented Lagrangian method
//! and the penalty-path generator: modified Newton with an eigenvalue
//! shift (the trust-region dual), plus explicit negative-curvature escape
//! so the returned point certifies both a small gradient and an
//! eps-positive-semidefinite surrogate Hessian.

use crate::linalg::{axpy, dot, norm, sym_eigen, SymMatrix};

/// Objective with a (possibly surrogate) second-order model.
pub trait SecondOrderModel {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> SymMatrix;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    /// Both exit tests hold: ||grad|| <= eps and lambda_min(H) >= -eps.
    Converged,
    /// Iteration cap or unrecoverable line-search failure.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub status: NewtonStatus,
}

const ARMIJO: f64 = 1e-4;

/// Minimizes until `||grad|| <= eps` and `lambda_min(hessian) >= -eps`,
/// or the iteration cap is hit. NaN trial values are treated as rejected
/// steps (the backtracking shrinks past them).
pub fn minimize(
    model: &dyn SecondOrderModel,
    x0: &[f64],
    eps: f64,
    max_iter: usize,
) -> NewtonResult {
    run(model, x0, eps, max_iter, true)
}

/// Drives only the gradient below `eps`; no curvature test and no escape
/// from stationary saddles. Shifted Newton steps contract toward the
/// nearest stationary point, so this variant tracks a stationary branch
/// through the start point instead of tunnelling to a lower basin.
pub fn minimize_to_stationarity(
    model: &dyn SecondOrderModel,
    x0: &[f64],
    eps: f64,
    max_iter: usize,
) -> NewtonResult {
    run(model, x0, eps, max_iter, false)
}

fn run(
    model: &dyn SecondOrderModel,
    x0: &[f64],
    eps: f64,
    max_iter: usize,
    second_order_exit: bool,
) -> NewtonResult {
    assert!(eps > 0.0);
    let mut x = x0.to_vec();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let grad = model.gradient(&x);
        let gnorm = norm(&grad);
        if !gnorm.is_finite() {
            return NewtonResult {
                x,
                iterations,
                grad_norm: gnorm,
                hess_min_eig: f64::NAN,
                status: NewtonStatus::Stalled,
            };
        }
        let hess = model.hessian(&x);
        let eig = match sym_eigen(&hess) {
            Ok(e) => e,
            Err(_) => {
                return NewtonResult {
                    x,
                    iterations,
                    grad_norm: gnorm,
                    hess_min_eig: f64::NAN,
                    status: NewtonStatus::Stalled,
                }
            }
        };
        let lam_min = eig.values[0];
        let lam_max = *eig.values.last().unwrap();

        if gnorm <= eps && (!second_order_exit || lam_min >= -eps) {
            return NewtonResult {
                x,
                iterations,
                grad_norm: gnorm,
                hess_min_eig: lam_min,
                status: NewtonStatus::Converged,
            };
        }

        let f0 = model.value(&x);
        if gnorm > eps {
            // Shifted Newton direction built from the spectral data we
            // already have: d = -V (Lambda + shift)^{-1} V^T g. The shift
            // is zero when the Hessian is already comfortably positive,
            // so well-conditioned convex problems get exact Newton steps.
            let shift = if lam_min > 1e-9 * (1.0 + lam_max.abs()) {
                0.0
            } else {
                (-lam_min).max(0.0) + 1e-8 * (1.0 + lam_max.abs())
            };
            let n = x.len();
            let mut coef = vec![0.0f64; n];
            for j in 0..n {
                let vj = eig.eigenvector(j);
                coef[j] = dot(&vj, &grad) / (eig.values[j] + shift);
            }
            let mut dir = vec![0.0f64; n];
            for j in 0..n {
                let vj = eig.eigenvector(j);
                axpy(&mut dir, -coef[j], &vj);
            }
            let slope = dot(&grad, &dir);
            if !(slope < 0.0) {
                // Rounding degenerated the direction; fall back to steepest
                // descent for this iteration.
                dir = grad.iter().map(|g| -g).collect();
            }
            let slope = dot(&grad, &dir);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..70 {
                let mut xt = x.clone();
                axpy(&mut xt, t, &dir);
                let ft = model.value(&xt);
                if ft.is_finite() && ft <= f0 + ARMIJO * t * slope {
                    x = xt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return NewtonResult {
                    x,
                    iterations,
                    grad_norm: gnorm,
                    hess_min_eig: lam_min,
                    status: NewtonStatus::Stalled,
                };
            }
        } else {
            // Gradient already small but curvature fails the test: move
            // along the most negative eigenvector.
            let v = eig.eigenvector(0);
            let sign = if dot(&grad, &v) > 0.0 { -1.0 } else { 1.0 };
            let mut t = 1.0 + 0.1 * norm(&x);
            let mut accepted = false;
            for _ in 0..60 {
                let mut xt = x.clone();
                axpy(&mut xt, sign * t, &v);
                let ft = model.value(&xt);
                // Expect at least a fraction of the curvature model decrease.
                if ft.is_finite() && ft <= f0 + 0.25 * 0.5 * lam_min * t * t {
                    x = xt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return NewtonResult {
                    x,
                    iterations,
                    grad_norm: gnorm,
                    hess_min_eig: lam_min,
                    status: NewtonStatus::Stalled,
                };
            }
        }
    }

    let grad = model.gradient(&x);
    let hess_min = sym_eigen(&model.hessian(&x)).map(|e| e.values[0]).unwrap_or(f64::NAN);
    let gnorm = norm(&grad);
    let status = if gnorm <= eps && (!second_order_exit || hess_min >= -eps) {
        NewtonStatus::Converged
    } else {
        NewtonStatus::Stalled
    };
    NewtonResult { x, iterations, grad_norm: gnorm, hess_min_eig: hess_min, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;
    impl SecondOrderModel for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter().enumerate().map(|(i, v)| 2.0 * (i as f64 + 1.0) * v).collect()
        }
        fn hessian(&self, x: &[f64]) -> SymMatrix {
            SymMatrix::diag(&(0..x.len()).map(|i| 2.0 * (i as f64 + 1.0)).collect::<Vec<_>>())
        }
    }

    // f = x1^2 - x2^2 + x2^4/4: strict saddle at the origin, minima at
    // x2 = +-sqrt(2).
    struct Saddle;
    impl SecondOrderModel for Saddle {
        fn value(&self, x: &[f64]) -> f64 {
            x[0] * x[0] - x[1] * x[1] + 0.25 * x[1].powi(4)
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * x[0], -2.0 * x[1] + x[1].powi(3)]
        }
        fn hessian(&self, x: &[f64]) -> SymMatrix {
            SymMatrix::diag(&[2.0, -2.0 + 3.0 * x[1] * x[1]])
        }
    }

    #[test]
    fn strictly_convex_quadratic_one_newton_step() {
        let r = minimize(&Quadratic, &[3.0, -1.5, 2.0], 1e-10, 50);
        assert_eq!(r.status, NewtonStatus::Converged);
        assert!(r.grad_norm <= 1e-10);
        // One Newton step plus the certifying re-evaluation.
        assert!(r.iterations <= 2);
    }

    #[test]
    fn escapes_strict_saddle() {
        let r = minimize(&Saddle, &[0.0, 0.0], 1e-8, 200);
        assert_eq!(r.status, NewtonStatus::Converged);
        assert!(r.hess_min_eig >= -1e-8);
        assert!((r.x[1].abs() - 2.0f64.sqrt()).abs() <= 1e-6);
        assert!(r.x[0].abs() <= 1e-8);
    }

    #[test]
    fn nan_values_are_rejected_not_fatal() {
        struct NanWall;
        impl SecondOrderModel for NanWall {
            fn value(&self, x: &[f64]) -> f64 {
                if x[0] > 1.5 {
                    f64::NAN
                } else {
                    (x[0] - 1.0) * (x[0] - 1.0)
                }
            }
            fn gradient(&self, x: &[f64]) -> Vec<f64> {
                vec![2.0 * (x[0] - 1.0)]
            }
            fn hessian(&self, _x: &[f64]) -> SymMatrix {
                SymMatrix::diag(&[2.0])
            }
        }
        let r = minimize(&NanWall, &[-2.0], 1e-10, 100);
        assert_eq!(r.status, NewtonStatus::Converged);
        assert!((r.x[0] - 1.0).abs() <= 1e-9);
    }
}
