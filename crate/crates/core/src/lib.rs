//! Nonlinear second-order cone programming toolkit.
//!
//! Solves problems of the form
//!
//! ```text
//! minimize    f(x)
//! subject to  g_i(x) in K_i,  i = 1..r,
//!             h(x) = 0,
//! ```
//!
//! where each `K_i` is a Lorentz cone, with two globally convergent
//! methods - a safeguarded augmented Lagrangian with a second-order inner
//! exit test, and a stabilized SQP with VOMF multiplier updates - plus
//! residual checkers that certify first-order (KKT/AKKT/CAKKT) and
//! second-order (AKKT2/WSONC) sequential optimality conditions at desk
//! scale.
//!
//! Module map:
//!
//! * [`linalg`]: dense symmetric eigendecomposition, SPD solves, rank and
//!   null-space computation;
//! * [`soc`]: cone geometry and the semismooth projection calculus;
//! * [`model`]: expression-based problems with exact analytic derivatives
//!   and the built-in test registry;
//! * [`conditions`]: index sets, residual checkers, certificates, the
//!   WSONC/Robinson/constant-rank diagnostics and the penalty path;
//! * [`auglag`]: the augmented Lagrangian method;
//! * [`subqp`]: the conic-quadratic proximal subproblem solver;
//! * [`sqp`]: the stabilized SQP method;
//! * [`trace`]: iteration traces and solver statuses.

pub mod auglag;
pub mod conditions;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod soc;
pub mod sqp;
pub mod subqp;
pub mod trace;

pub use conditions::{Akkt2Certificate, Akkt2Params, CertRow, FirstOrderResiduals, IndexSets};
pub use linalg::{EigenResult, Mat, NullSpaceBasis, SymMatrix};
pub use model::{builtin, builtin_names, KnownSolution, Problem, ProblemSpecFile};
pub use soc::{BlockVector, ConeProduct, ConeRegion, SpectralDecomposition};
pub use trace::{IterateTrace, SolveStatus, TraceRow};
