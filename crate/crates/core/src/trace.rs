//! Append-only iteration traces shared by both solvers, exported as JSON
//! for post-hoc certification and replay tests.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    IterationCap,
    InnerStall,
    InfeasibleStationary,
    SubproblemFailure,
}

impl SolveStatus {
    /// Process exit code convention: 0 converged, 2 iteration cap,
    /// 3 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SolveStatus::Converged => 0,
            SolveStatus::IterationCap => 2,
            _ => 3,
        }
    }
}

/// One solver iteration. Solver-specific columns are optional: the
/// augmented Lagrangian records the safeguarded multipliers, the inner
/// tolerance and the certified surrogate eigenvalue; the SQP records the
/// iterate class.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub rho: f64,
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hat_mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hat_omega: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_min_eig: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IterateTrace {
    pub problem: String,
    pub solver: String,
    pub seed: u64,
    rows: Vec<TraceRow>,
}

impl IterateTrace {
    pub fn new(problem: impl Into<String>, solver: impl Into<String>, seed: u64) -> Self {
        IterateTrace { problem: problem.into(), solver: solver.into(), seed, rows: Vec::new() }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace rows serialize")
    }

    pub fn from_json_str(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}
