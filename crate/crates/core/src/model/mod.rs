//! Problem representation: blocked constraint structure with expression
//! evaluators, exact analytic derivatives, a finite-difference audit, the
//! JSON problem-file format and the built-in test-problem registry.

pub mod expr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat, SymMatrix};
use crate::soc::{BlockVector, ConeProduct};
use expr::{parse_expr, Expr, ParseError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("in expression '{source_text}': {err}")]
    Parse { source_text: String, err: ParseError },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown builtin problem '{name}'; available: {available}")]
    UnknownBuiltin { name: String, available: String },
    #[error("invalid problem file: {0}")]
    InvalidSpec(String),
}

/// A scalar function with precomputed gradient and Hessian ASTs. The
/// Hessian is assembled from the lower triangle and mirrored, so it is
/// symmetric by construction.
#[derive(Debug, Clone)]
pub struct ScalarFunc {
    n: usize,
    expr: Expr,
    grad: Vec<Expr>,
    hess_lower: Vec<Vec<Expr>>,
}

impl ScalarFunc {
    pub fn new(expr: Expr, n: usize) -> Self {
        let grad: Vec<Expr> = (0..n).map(|i| expr.diff(i)).collect();
        let hess_lower: Vec<Vec<Expr>> = (0..n)
            .map(|i| (0..=i).map(|j| grad[i].diff(j)).collect())
            .collect();
        ScalarFunc { n, expr, grad, hess_lower }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x)).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> SymMatrix {
        let mut h = SymMatrix::zeros(self.n.max(1));
        for i in 0..self.n {
            for j in 0..=i {
                h.set(i, j, self.hess_lower[i][j].eval(x));
            }
        }
        h
    }
}

/// Known-solution annotation carried by a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownSolution {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub note: String,
}

/// JSON problem file. Cone blocks are lists of component expressions; the
/// block dimension is the list length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub objective: String,
    #[serde(default)]
    pub equalities: Vec<String>,
    pub cones: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<KnownSolution>,
}

/// An optimization problem: minimize f(x) subject to g(x) in K, h(x) = 0,
/// with all evaluators twice continuously differentiable by construction.
/// Immutable after construction; evaluation is reentrant.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    n: usize,
    objective: ScalarFunc,
    equalities: Vec<ScalarFunc>,
    cone: ConeProduct,
    cone_components: Vec<ScalarFunc>,
    known_solution: Option<KnownSolution>,
    source: ProblemSpecFile,
}

/// Everything the optimality machinery needs at one point, in one bundle.
#[derive(Debug, Clone)]
pub struct LagrangianData {
    /// ∇f + Dh^T mu - Dg^T omega.
    pub grad_l: Vec<f64>,
    /// ∇²f + Σ mu_i ∇²h_i - Σ omega_j ∇²g_j.
    pub hess_l: SymMatrix,
    pub dg: Mat,
    pub dh: Mat,
    pub g: BlockVector,
    pub h: Vec<f64>,
}

impl Problem {
    pub fn from_spec(spec: ProblemSpecFile) -> Result<Problem, ModelError> {
        if spec.n == 0 {
            return Err(ModelError::InvalidSpec("n must be at least 1".into()));
        }
        if spec.cones.is_empty() || spec.cones.iter().any(|b| b.is_empty()) {
            return Err(ModelError::InvalidSpec(
                "at least one cone block with at least one component is required".into(),
            ));
        }
        let parse = |text: &str| -> Result<ScalarFunc, ModelError> {
            let e = parse_expr(text, spec.n).map_err(|err| ModelError::Parse {
                source_text: text.to_string(),
                err,
            })?;
            Ok(ScalarFunc::new(e, spec.n))
        };
        let objective = parse(&spec.objective)?;
        let equalities = spec
            .equalities
            .iter()
            .map(|t| parse(t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cone_components = Vec::new();
        for block in &spec.cones {
            for comp in block {
                cone_components.push(parse(comp)?);
            }
        }
        let cone = ConeProduct::new(spec.cones.iter().map(|b| b.len()).collect());
        if let Some(ks) = &spec.known_solution {
            if ks.x.len() != spec.n {
                return Err(ModelError::Dimension(format!(
                    "known solution x has length {}, expected {}",
                    ks.x.len(),
                    spec.n
                )));
            }
            if let Some(mu) = &ks.mu {
                if mu.len() != spec.equalities.len() {
                    return Err(ModelError::Dimension(
                        "known solution mu length must equal the equality count".into(),
                    ));
                }
            }
            if let Some(om) = &ks.omega {
                if om.len() != cone.total_dim() {
                    return Err(ModelError::Dimension(
                        "known solution omega length must equal the total cone dimension".into(),
                    ));
                }
            }
        }
        let name = spec.name.clone().unwrap_or_else(|| "unnamed".to_string());
        Ok(Problem {
            name,
            n: spec.n,
            objective,
            equalities,
            cone,
            cone_components,
            known_solution: spec.known_solution.clone(),
            source: spec,
        })
    }

    pub fn from_json(json: &str) -> Result<Problem, ModelError> {
        let spec: ProblemSpecFile =
            serde_json::from_str(json).map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        Problem::from_spec(spec)
    }

    /// The originating spec; `Problem::from_spec(p.to_spec())` evaluates
    /// identically to `p`.
    pub fn to_spec(&self) -> ProblemSpecFile {
        self.source.clone()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn equality_count(&self) -> usize {
        self.equalities.len()
    }

    pub fn cone(&self) -> &ConeProduct {
        &self.cone
    }

    pub fn total_cone_dim(&self) -> usize {
        self.cone.total_dim()
    }

    pub fn known_solution(&self) -> Option<&KnownSolution> {
        self.known_solution.as_ref()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.objective.gradient(x)
    }

    pub fn objective_hessian(&self, x: &[f64]) -> SymMatrix {
        self.objective.hessian(x)
    }

    pub fn equality_values(&self, x: &[f64]) -> Vec<f64> {
        self.equalities.iter().map(|e| e.value(x)).collect()
    }

    /// Jacobian of h, p x n (0 x n when there are no equalities).
    pub fn equality_jacobian(&self, x: &[f64]) -> Mat {
        let rows: Vec<Vec<f64>> = self.equalities.iter().map(|e| e.gradient(x)).collect();
        Mat::from_rows(&rows, self.n)
    }

    pub fn equality_hessian(&self, i: usize, x: &[f64]) -> SymMatrix {
        self.equalities[i].hessian(x)
    }

    pub fn cone_values(&self, x: &[f64]) -> BlockVector {
        let data: Vec<f64> = self.cone_components.iter().map(|c| c.value(x)).collect();
        BlockVector::new(self.cone.clone(), data)
    }

    /// Jacobian of the stacked g, m x n.
    pub fn cone_jacobian(&self, x: &[f64]) -> Mat {
        let rows: Vec<Vec<f64>> = self.cone_components.iter().map(|c| c.gradient(x)).collect();
        Mat::from_rows(&rows, self.n)
    }

    /// Jacobian of block i only, m_i x n.
    pub fn cone_block_jacobian(&self, i: usize, x: &[f64]) -> Mat {
        let o = self.cone.offset(i);
        let m = self.cone.block_dim(i);
        let rows: Vec<Vec<f64>> = (o..o + m)
            .map(|j| self.cone_components[j].gradient(x))
            .collect();
        Mat::from_rows(&rows, self.n)
    }

    pub fn cone_component_hessian(&self, j: usize, x: &[f64]) -> SymMatrix {
        self.cone_components[j].hessian(x)
    }

    /// Evaluates the Lagrangian bundle at `(x, mu, omega)` where the
    /// Lagrangian is `f(x) + <h(x), mu> - <g(x), omega>`.
    pub fn eval_lagrangian_data(
        &self,
        x: &[f64],
        mu: &[f64],
        omega: &BlockVector,
    ) -> Result<LagrangianData, ModelError> {
        if x.len() != self.n {
            return Err(ModelError::Dimension(format!(
                "x has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        if mu.len() != self.equalities.len() {
            return Err(ModelError::Dimension(format!(
                "mu has length {}, expected {}",
                mu.len(),
                self.equalities.len()
            )));
        }
        if omega.cone() != &self.cone {
            return Err(ModelError::Dimension(
                "omega cone structure does not match the problem".into(),
            ));
        }
        let dg = self.cone_jacobian(x);
        let dh = self.equality_jacobian(x);
        let g = self.cone_values(x);
        let h = self.equality_values(x);

        let mut grad_l = self.objective_gradient(x);
        let ht = dh.tr_matvec(mu);
        let gt = dg.tr_matvec(omega.as_slice());
        for i in 0..self.n {
            grad_l[i] += ht[i] - gt[i];
        }

        let mut hess_l = self.objective_hessian(x);
        for (i, mid) in mu.iter().enumerate() {
            if *mid != 0.0 {
                hess_l.add_assign_scaled(&self.equality_hessian(i, x), *mid);
            }
        }
        for (j, oj) in omega.as_slice().iter().enumerate() {
            if *oj != 0.0 {
                hess_l.add_assign_scaled(&self.cone_component_hessian(j, x), -*oj);
            }
        }
        Ok(LagrangianData { grad_l, hess_l, dg, dh, g, h })
    }
}

/// One flagged entry of a derivative audit.
#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub what: String,
    pub rel_error: f64,
}

/// Result of comparing all analytic first and second derivatives against
/// central finite differences.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub max_rel_error: f64,
    pub flagged: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.flagged.is_empty()
    }
}

const AUDIT_STEP: f64 = 1e-5;
const AUDIT_TOL: f64 = 1e-4;

/// Compares every analytic gradient and Hessian against central finite
/// differences at `x`. Non-finite comparisons (domain edges) are flagged,
/// never fatal. Guarded relative error: |a - fd| / max(1, |a|).
pub fn finite_diff_audit(problem: &Problem, x: &[f64]) -> AuditReport {
    let mut flagged = Vec::new();
    let mut max_rel = 0.0f64;
    let mut check = |what: String, analytic: f64, fd: f64| {
        let rel = if analytic.is_finite() && fd.is_finite() {
            (analytic - fd).abs() / analytic.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        if rel > max_rel || !rel.is_finite() {
            max_rel = max_rel.max(rel);
        }
        if !(rel <= AUDIT_TOL) {
            flagged.push(AuditEntry { what, rel_error: rel });
        }
    };

    let funcs: Vec<(String, &ScalarFunc)> = std::iter::once(("f".to_string(), &problem.objective))
        .chain(
            problem
                .equalities
                .iter()
                .enumerate()
                .map(|(i, e)| (format!("h{}", i + 1), e)),
        )
        .chain(
            problem
                .cone_components
                .iter()
                .enumerate()
                .map(|(j, c)| (format!("g{}", j + 1), c)),
        )
        .collect();

    let n = problem.n;
    for (label, func) in funcs {
        let grad = func.gradient(x);
        let hess = func.hessian(x);
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += AUDIT_STEP;
            xm[i] -= AUDIT_STEP;
            let fd = (func.value(&xp) - func.value(&xm)) / (2.0 * AUDIT_STEP);
            check(format!("d{label}/dx{}", i + 1), grad[i], fd);
            // Second derivatives: central difference of the analytic gradient.
            let gp = func.gradient(&xp);
            let gm = func.gradient(&xm);
            for j in 0..n {
                let fd2 = (gp[j] - gm[j]) / (2.0 * AUDIT_STEP);
                check(format!("d2{label}/dx{}dx{}", i + 1, j + 1), hess.get(j, i), fd2);
            }
        }
    }
    AuditReport { max_rel_error: max_rel, flagged }
}

/// Names of the registered built-in problems.
pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "paper_example",
        "scalar_soc",
        "degenerate_eq",
        "rotated_cone",
        "interior_qp",
        "origin_soc",
    ]
}

/// Constructs a built-in problem by name.
///
/// The registry covers the limit regimes the optimality machinery cares
/// about: a boundary-active block with curvature failure (`paper_example`),
/// a boundary-active block with a clean certificate (`scalar_soc`,
/// `rotated_cone`), a CQ-failure equality (`degenerate_eq`), a strictly
/// interior solution (`interior_qp`) and a zero-active block (`origin_soc`).
pub fn builtin(name: &str) -> Result<Problem, ModelError> {
    let json = match name {
        // Boundary-active block where first-order conditions hold but the
        // second-order sequential condition provably fails at (1, 1).
        "paper_example" => {
            r#"{
            "name": "paper_example",
            "n": 2,
            "objective": "-x1 - x2",
            "cones": [["1", "x1^2 * x2^2"]],
            "known_solution": {
                "x": [1.0, 1.0],
                "omega": [0.5, -0.5],
                "note": "first-order stationary with boundary multiplier; curvature along (1,-1) is negative"
            }
        }"#
        }
        // min x subject to (x, 1) in K^2, i.e. x >= 1.
        "scalar_soc" => {
            r#"{
            "name": "scalar_soc",
            "n": 1,
            "objective": "x1",
            "cones": [["x1", "1"]],
            "known_solution": {
                "x": [1.0],
                "omega": [1.0, -1.0],
                "note": "boundary solution with strict complementarity on the ray"
            }
        }"#
        }
        // Feasible set {0}; the equality gradient vanishes there, so no
        // KKT multiplier exists while the approximate residuals still decay.
        "degenerate_eq" => {
            r#"{
            "name": "degenerate_eq",
            "n": 1,
            "objective": "x1",
            "equalities": ["x1^2"],
            "cones": [["1"]],
            "known_solution": {
                "x": [0.0],
                "note": "no KKT point (h'(0) = 0); multipliers diverge along any certifying sequence"
            }
        }"#
        }
        // Rotated-cone feasibility 4 x1 x2 >= 1 written as a Lorentz block,
        // with x3 pinned by an equality.
        "rotated_cone" => {
            r#"{
            "name": "rotated_cone",
            "n": 3,
            "objective": "x1 + x2",
            "equalities": ["x3 - 1"],
            "cones": [["x1 + x2", "x1 - x2", "x3"]],
            "known_solution": {
                "x": [0.5, 0.5, 1.0],
                "mu": [-1.0],
                "omega": [1.0, 0.0, -1.0],
                "note": "boundary block of dimension 3 plus an active equality"
            }
        }"#
        }
        // Strictly convex quadratic whose unconstrained minimizer is
        // interior to the cone; multipliers vanish.
        "interior_qp" => {
            r#"{
            "name": "interior_qp",
            "n": 2,
            "objective": "(x1 - 1)^2 + (x2 - 0.25)^2",
            "cones": [["x1 + 2", "x2"]],
            "known_solution": {
                "x": [1.0, 0.25],
                "omega": [0.0, 0.0],
                "note": "interior solution; the conic constraint is inactive"
            }
        }"#
        }
        // Solution at the cone origin: the whole block is zero-active.
        "origin_soc" => {
            r#"{
            "name": "origin_soc",
            "n": 2,
            "objective": "x1 + 0.5 * x2^2",
            "cones": [["x1", "x2"]],
            "known_solution": {
                "x": [0.0, 0.0],
                "omega": [1.0, 0.0],
                "note": "zero-active block with an interior multiplier"
            }
        }"#
        }
        _ => {
            return Err(ModelError::UnknownBuiltin {
                name: name.to_string(),
                available: builtin_names().join(", "),
            })
        }
    };
    Problem::from_json(json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn lagrangian_with_zero_multipliers_is_objective_gradient() {
        let p = builtin("interior_qp").unwrap();
        let x = [0.3, -0.4];
        let omega = BlockVector::zeros(p.cone().clone());
        let data = p.eval_lagrangian_data(&x, &[], &omega).unwrap();
        assert_eq!(data.grad_l, p.objective_gradient(&x));
    }

    #[test]
    fn paper_example_lagrangian_at_solution() {
        let p = builtin("paper_example").unwrap();
        let omega = BlockVector::new(p.cone().clone(), vec![0.5, -0.5]);
        let data = p.eval_lagrangian_data(&[1.0, 1.0], &[], &omega).unwrap();
        assert!(norm(&data.grad_l) <= 1e-14);
        // Hessian of the Lagrangian: -omega_2 * hess(x1^2 x2^2) = [[1,2],[2,1]].
        assert_eq!(data.hess_l.get(0, 0), 1.0);
        assert_eq!(data.hess_l.get(0, 1), 2.0);
        assert_eq!(data.hess_l.get(1, 1), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = builtin("paper_example").unwrap();
        let omega = BlockVector::zeros(p.cone().clone());
        assert!(p.eval_lagrangian_data(&[1.0], &[], &omega).is_err());
        assert!(p.eval_lagrangian_data(&[1.0, 1.0], &[0.0], &omega).is_err());
    }

    #[test]
    fn audit_flags_nothing_on_builtins() {
        let mut rng = StdRng::seed_from_u64(9);
        for name in builtin_names() {
            let p = builtin(name).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(0.3..1.7)).collect();
                let report = finite_diff_audit(&p, &x);
                assert!(
                    report.pass(),
                    "{name}: audit flagged {:?} at {x:?}",
                    report.flagged
                );
            }
        }
    }

    #[test]
    fn audit_linear_objective_zero_hessian_error() {
        let p = builtin("scalar_soc").unwrap();
        let report = finite_diff_audit(&p, &[0.7]);
        assert!(report.pass());
        assert!(report.max_rel_error <= 1e-9);
    }

    #[test]
    fn audit_flags_domain_edge_instead_of_crashing() {
        let spec = ProblemSpecFile {
            name: Some("edge".into()),
            n: 1,
            objective: "log(x1)".into(),
            equalities: vec![],
            cones: vec![vec!["1".into()]],
            known_solution: None,
        };
        let p = Problem::from_spec(spec).unwrap();
        // Step crosses the domain boundary: the report flags, no panic.
        let report = finite_diff_audit(&p, &[5e-6]);
        assert!(!report.pass());
    }

    #[test]
    fn spec_round_trip_preserves_semantics() {
        let mut rng = StdRng::seed_from_u64(10);
        for name in builtin_names() {
            let p = builtin(name).unwrap();
            let spec = p.to_spec();
            let json = serde_json::to_string(&spec).unwrap();
            let p2 = Problem::from_json(&json).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(0.2..1.8)).collect();
                assert!((p.objective_value(&x) - p2.objective_value(&x)).abs() <= 1e-12);
                let g1 = p.cone_values(&x);
                let g2 = p2.cone_values(&x);
                for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
                    assert!((a - b).abs() <= 1e-12);
                }
                let h1 = p.equality_values(&x);
                let h2 = p2.equality_values(&x);
                for (a, b) in h1.iter().zip(&h2) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn unknown_builtin_lists_available() {
        let err = builtin("nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("paper_example"));
        assert!(msg.contains("scalar_soc"));
    }

    #[test]
    fn known_solutions_satisfy_first_order_conditions() {
        // Every annotated (x*, mu*, omega*) should zero the Lagrangian
        // gradient and blockwise complementarity.
        for name in ["paper_example", "scalar_soc", "rotated_cone", "interior_qp", "origin_soc"] {
            let p = builtin(name).unwrap();
            let ks = p.known_solution().unwrap().clone();
            let mu = ks.mu.clone().unwrap_or_default();
            let omega = BlockVector::new(p.cone().clone(), ks.omega.clone().unwrap());
            let data = p.eval_lagrangian_data(&ks.x, &mu, &omega).unwrap();
            assert!(norm(&data.grad_l) <= 1e-12, "{name}: stationarity");
            for i in 0..p.cone().block_count() {
                let gi = data.g.block(i);
                let oi = omega.block(i);
                assert!(
                    crate::linalg::dot(gi, oi).abs() <= 1e-12,
                    "{name}: complementarity block {i}"
                );
            }
            assert!(omega.in_cone(1e-12), "{name}: omega in K");
        }
    }
}
