//! Library backing the `nlsocp` binary: problem loading, solver
//! dispatch with typed config overrides, condition checking for points
//! and iterate sequences, and JSON export with a stable field order.
//!
//! All machine outputs are JSON; floats go through serde_json's
//! shortest-round-trip formatting, so a re-read reproduces every bit and
//! replay tests can compare outputs byte for byte.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlsocp::auglag::{self, AuglagConfig};
use nlsocp::conditions::{
    self, akkt2_matrix, akkt2_penalty_params, akkt_ray_control, certify_iterate_local_sets,
    first_order_residuals, index_sets, robinson_measure, wcr_probe, wsonc_check,
    Akkt2Certificate,
};
use nlsocp::linalg::norm;
use nlsocp::model::{builtin, builtin_names, Problem, ProblemSpecFile};
use nlsocp::soc::BlockVector;
use nlsocp::sqp::{self, SqpConfig};
use nlsocp::trace::{IterateTrace, SolveStatus, TraceRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CAP: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Builtin(String),
    SpecFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Auglag,
    Sqp,
    PenaltyPath,
}

impl SolverKind {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "auglag" => Ok(SolverKind::Auglag),
            "sqp" => Ok(SolverKind::Sqp),
            "penalty-path" => Ok(SolverKind::PenaltyPath),
            other => Err(format!(
                "unknown solver '{other}' (expected auglag, sqp or penalty-path)"
            )),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Auglag => "auglag",
            SolverKind::Sqp => "sqp",
            SolverKind::PenaltyPath => "penalty-path",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

impl OutputFormat {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected text or json)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problems: Vec<ProblemSource>,
    pub solver: SolverKind,
    pub overrides: Vec<(String, String)>,
    pub trace_path: Option<PathBuf>,
    pub cert_path: Option<PathBuf>,
    pub hint: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub jobs: usize,
    pub seed: u64,
    pub format: OutputFormat,
}

/// Parses a comma-separated vector like `1,0.5,-2e-3`.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{}' is not a number", tok.trim()))
        })
        .collect()
}

pub fn load_problem(source: &ProblemSource) -> Result<Problem, String> {
    match source {
        ProblemSource::Builtin(name) => builtin(name).map_err(|e| e.to_string()),
        ProblemSource::SpecFile(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
            Problem::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("override '{key}': '{value}' is not a number"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("override '{key}': '{value}' is not a count"))
}

const AUGLAG_KEYS: &[&str] = &[
    "gamma", "rho0", "tau", "eps0", "eps_decay", "eps_floor", "mu_max", "omega_max",
    "max_outer", "max_inner", "target_tol", "rho_cap", "cert_eps_active",
];

pub fn apply_auglag_overrides(
    config: &mut AuglagConfig,
    overrides: &[(String, String)],
) -> Result<(), String> {
    for (key, value) in overrides {
        match key.as_str() {
            "gamma" => config.gamma = parse_f64(key, value)?,
            "rho0" => config.rho0 = parse_f64(key, value)?,
            "tau" => config.tau = parse_f64(key, value)?,
            "eps0" => config.eps0 = parse_f64(key, value)?,
            "eps_decay" => config.eps_decay = parse_f64(key, value)?,
            "eps_floor" => config.eps_floor = parse_f64(key, value)?,
            "mu_max" => config.mu_max = parse_f64(key, value)?,
            "omega_max" => config.omega_max = parse_f64(key, value)?,
            "max_outer" => config.max_outer = parse_usize(key, value)?,
            "max_inner" => config.max_inner = parse_usize(key, value)?,
            "target_tol" => config.target_tol = parse_f64(key, value)?,
            "rho_cap" => config.rho_cap = parse_f64(key, value)?,
            "cert_eps_active" => config.cert_eps_active = parse_f64(key, value)?,
            _ => {
                return Err(format!(
                    "unknown auglag override '{key}' (valid: {})",
                    AUGLAG_KEYS.join(", ")
                ))
            }
        }
    }
    Ok(())
}

const SQP_KEYS: &[&str] = &[
    "tau", "alpha", "beta", "kappa", "mu_max", "omega_max", "phi0", "psi0", "gamma0", "rho0",
    "rho_floor", "eps0", "eps_decay", "eps_floor", "active_freeze_window", "nu1", "nu2",
    "grad_zero_tol", "subqp_tol", "subqp_cap", "ls_cap", "max_iter", "target_tol",
    "cert_eps_active",
];

pub fn apply_sqp_overrides(
    config: &mut SqpConfig,
    overrides: &[(String, String)],
) -> Result<(), String> {
    for (key, value) in overrides {
        match key.as_str() {
            "tau" => config.tau = parse_f64(key, value)?,
            "alpha" => config.alpha = parse_f64(key, value)?,
            "beta" => config.beta = parse_f64(key, value)?,
            "kappa" => config.kappa = parse_f64(key, value)?,
            "mu_max" => config.mu_max = parse_f64(key, value)?,
            "omega_max" => config.omega_max = parse_f64(key, value)?,
            "phi0" => config.phi0 = parse_f64(key, value)?,
            "psi0" => config.psi0 = parse_f64(key, value)?,
            "gamma0" => config.gamma0 = parse_f64(key, value)?,
            "rho0" => config.rho0 = parse_f64(key, value)?,
            "rho_floor" => config.rho_floor = parse_f64(key, value)?,
            "eps0" => config.eps0 = parse_f64(key, value)?,
            "eps_decay" => config.eps_decay = parse_f64(key, value)?,
            "eps_floor" => config.eps_floor = parse_f64(key, value)?,
            "active_freeze_window" => config.active_freeze_window = parse_usize(key, value)?,
            "nu1" => config.nu1 = parse_f64(key, value)?,
            "nu2" => config.nu2 = parse_f64(key, value)?,
            "grad_zero_tol" => config.grad_zero_tol = parse_f64(key, value)?,
            "subqp_tol" => config.subqp_tol = parse_f64(key, value)?,
            "subqp_cap" => config.subqp_cap = parse_usize(key, value)?,
            "ls_cap" => config.ls_cap = parse_usize(key, value)?,
            "max_iter" => config.max_iter = parse_usize(key, value)?,
            "target_tol" => config.target_tol = parse_f64(key, value)?,
            "cert_eps_active" => config.cert_eps_active = parse_f64(key, value)?,
            _ => {
                return Err(format!(
                    "unknown sqp override '{key}' (valid: {})",
                    SQP_KEYS.join(", ")
                ))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PenaltyPathConfig {
    pub rho_min_exp: i32,
    pub rho_max_exp: i32,
    pub inner_tol: f64,
}

impl Default for PenaltyPathConfig {
    fn default() -> Self {
        PenaltyPathConfig { rho_min_exp: 1, rho_max_exp: 6, inner_tol: 1e-12 }
    }
}

const PATH_KEYS: &[&str] = &["rho_min_exp", "rho_max_exp", "inner_tol"];

pub fn apply_path_overrides(
    config: &mut PenaltyPathConfig,
    overrides: &[(String, String)],
) -> Result<(), String> {
    for (key, value) in overrides {
        match key.as_str() {
            "rho_min_exp" => {
                config.rho_min_exp = value
                    .parse::<i32>()
                    .map_err(|_| format!("override '{key}': '{value}' is not an integer"))?
            }
            "rho_max_exp" => {
                config.rho_max_exp = value
                    .parse::<i32>()
                    .map_err(|_| format!("override '{key}': '{value}' is not an integer"))?
            }
            "inner_tol" => config.inner_tol = parse_f64(key, value)?,
            _ => {
                return Err(format!(
                    "unknown penalty-path override '{key}' (valid: {})",
                    PATH_KEYS.join(", ")
                ))
            }
        }
    }
    Ok(())
}

/// Flat summary of one solve, serialized as the JSON output and rendered
/// as the text summary.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub problem: String,
    pub solver: String,
    pub status: SolveStatus,
    pub exit_code: i32,
    pub iterations: usize,
    pub x: Vec<f64>,
    pub stationarity: f64,
    #[serde(rename = "r_V")]
    pub r_v: f64,
    pub akkt_comp: f64,
    pub cakkt_comp: f64,
    pub so_residual: f64,
    pub rho_final: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_to_known: Option<f64>,
}

pub struct SolveArtifacts {
    pub summary: SolveSummary,
    pub trace: IterateTrace,
    pub certificate: Akkt2Certificate,
}

/// Runs one solver on one problem.
pub fn run_solver(
    problem: &Problem,
    solver: SolverKind,
    overrides: &[(String, String)],
    hint: Option<&[f64]>,
    x0: Option<&[f64]>,
    seed: u64,
) -> Result<SolveArtifacts, String> {
    let start = x0
        .map(|v| v.to_vec())
        .unwrap_or_else(|| vec![0.0; problem.dim()]);
    if start.len() != problem.dim() {
        return Err(format!(
            "starting point has {} entries, problem has {} variables",
            start.len(),
            problem.dim()
        ));
    }
    match solver {
        SolverKind::Auglag => {
            let mut config = AuglagConfig::default();
            apply_auglag_overrides(&mut config, overrides)?;
            let out = auglag::solve(problem, &config, &start).map_err(|e| e.to_string())?;
            let mut trace = out.trace;
            trace.seed = seed;
            let last = out.certificate.last().cloned();
            let summary = summarize(
                problem,
                solver,
                out.status,
                out.iterations,
                &out.x,
                last.as_ref(),
                trace.rows().last().map(|r| r.rho).unwrap_or(config.rho0),
            );
            Ok(SolveArtifacts { summary, trace, certificate: out.certificate })
        }
        SolverKind::Sqp => {
            let mut config = SqpConfig::default();
            apply_sqp_overrides(&mut config, overrides)?;
            let omega0 = BlockVector::zeros(problem.cone().clone());
            let mu0 = vec![0.0; problem.equality_count()];
            let out = sqp::solve(problem, &config, &start, &mu0, &omega0)
                .map_err(|e| e.to_string())?;
            let mut trace = out.trace;
            trace.seed = seed;
            let last = out.certificate.last().cloned();
            let rho_final = out.log.last().map(|l| l.rho_after).unwrap_or(config.rho0);
            let summary = summarize(
                problem,
                solver,
                out.status,
                out.iterations,
                &out.x,
                last.as_ref(),
                rho_final,
            );
            Ok(SolveArtifacts { summary, trace, certificate: out.certificate })
        }
        SolverKind::PenaltyPath => {
            let hint = hint.ok_or("penalty-path requires --hint v1,v2,...")?;
            if hint.len() != problem.dim() {
                return Err(format!(
                    "hint has {} entries, problem has {} variables",
                    hint.len(),
                    problem.dim()
                ));
            }
            let mut config = PenaltyPathConfig::default();
            apply_path_overrides(&mut config, overrides)?;
            if config.rho_max_exp < config.rho_min_exp {
                return Err("rho_max_exp must be at least rho_min_exp".into());
            }
            let schedule: Vec<f64> = (config.rho_min_exp..=config.rho_max_exp)
                .map(|e| 10f64.powi(e))
                .collect();
            let out = conditions::penalty_path(problem, hint, &schedule, &[config.inner_tol])
                .map_err(|e| e.to_string())?;
            let mut trace = IterateTrace::new(problem.name(), solver.as_str(), seed);
            for row in out.certificate.rows() {
                trace.push(TraceRow {
                    k: row.k,
                    rho: row.rho,
                    x: row.x.clone(),
                    mu: row.mu.clone(),
                    omega: row.omega.clone(),
                    eps: Some(config.inner_tol),
                    hat_mu: None,
                    hat_omega: None,
                    inner_min_eig: None,
                    class: None,
                });
            }
            let all_converged = out.certificate.rows().iter().all(|r| r.converged);
            let status = if all_converged {
                SolveStatus::Converged
            } else {
                SolveStatus::InnerStall
            };
            let last = out.certificate.last().cloned();
            let iterations = out.certificate.rows().len();
            let rho_final = last.as_ref().map(|r| r.rho).unwrap_or(0.0);
            let summary = summarize(
                problem,
                solver,
                status,
                iterations,
                &out.final_x,
                last.as_ref(),
                rho_final,
            );
            Ok(SolveArtifacts { summary, trace, certificate: out.certificate })
        }
    }
}

fn summarize(
    problem: &Problem,
    solver: SolverKind,
    status: SolveStatus,
    iterations: usize,
    x: &[f64],
    last: Option<&nlsocp::CertRow>,
    rho_final: f64,
) -> SolveSummary {
    let distance_to_known = problem.known_solution().map(|ks| {
        let d: f64 = x
            .iter()
            .zip(&ks.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        d
    });
    SolveSummary {
        problem: problem.name().to_string(),
        solver: solver.as_str().to_string(),
        status,
        exit_code: status.exit_code(),
        iterations,
        x: x.to_vec(),
        stationarity: last.map(|r| r.stationarity).unwrap_or(f64::NAN),
        r_v: last.map(|r| r.r_v).unwrap_or(f64::NAN),
        akkt_comp: last.map(|r| r.akkt_comp).unwrap_or(f64::NAN),
        cakkt_comp: last.map(|r| r.cakkt_comp).unwrap_or(f64::NAN),
        so_residual: last.map(|r| r.so_residual).unwrap_or(f64::NAN),
        rho_final,
        distance_to_known,
    }
}

fn render_summary_text(s: &SolveSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem: {}", s.problem);
    let _ = writeln!(out, "solver: {}", s.solver);
    let _ = writeln!(out, "status: {:?} (exit {})", s.status, s.exit_code);
    let _ = writeln!(out, "iterations: {}", s.iterations);
    let _ = writeln!(
        out,
        "final: stationarity {:.3e}  r_V {:.3e}  akkt_comp {:.3e}  cakkt_comp {:.3e}  so_residual {:.3e}",
        s.stationarity, s.r_v, s.akkt_comp, s.cakkt_comp, s.so_residual
    );
    let _ = writeln!(out, "rho: {:.3e}", s.rho_final);
    let _ = writeln!(out, "x: {:?}", s.x);
    if let Some(d) = s.distance_to_known {
        let _ = writeln!(out, "distance to annotated solution: {:.3e}", d);
    }
    out
}

fn suffixed_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("json");
    path.with_file_name(format!("{stem}-{suffix}.{ext}"))
}

/// Solve command: runs each requested problem (optionally in parallel),
/// writes trace/certificate JSON when asked and prints a summary per
/// problem. Exit code is the worst per-problem code.
pub fn cmd_solve(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if config.problems.is_empty() {
        let _ = writeln!(err, "error: no problem given (use --problem or --spec)");
        return EXIT_ERROR;
    }
    let mut results: Vec<Option<Result<SolveArtifacts, String>>> = Vec::new();
    results.resize_with(config.problems.len(), || None);
    let jobs = config.jobs.max(1);

    if jobs == 1 || config.problems.len() == 1 {
        for (i, source) in config.problems.iter().enumerate() {
            results[i] = Some(run_one(config, source));
        }
    } else {
        // Batch mode: independent problems across a bounded thread pool.
        let sources = &config.problems;
        let chunks: Vec<Vec<usize>> = (0..sources.len())
            .map(|i| vec![i])
            .collect::<Vec<_>>()
            .chunks(jobs)
            .map(|c| c.iter().flatten().copied().collect())
            .collect();
        for chunk in chunks {
            let outs: Vec<(usize, Result<SolveArtifacts, String>)> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|&i| {
                            let source = &sources[i];
                            scope.spawn(move || (i, run_one(config, source)))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap()).collect()
                });
            for (i, r) in outs {
                results[i] = Some(r);
            }
        }
    }

    let multi = config.problems.len() > 1;
    let mut worst = EXIT_OK;
    for (i, result) in results.into_iter().enumerate() {
        match result.expect("all slots filled") {
            Err(msg) => {
                let _ = writeln!(err, "error: {msg}");
                worst = worst.max(EXIT_ERROR);
            }
            Ok(art) => {
                if let Some(path) = &config.trace_path {
                    let path = if multi {
                        suffixed_path(path, &art.summary.problem)
                    } else {
                        path.clone()
                    };
                    if let Err(e) = std::fs::write(&path, art.trace.to_json_string()) {
                        let _ = writeln!(err, "error: cannot write '{}': {e}", path.display());
                        worst = worst.max(EXIT_ERROR);
                    }
                }
                if let Some(path) = &config.cert_path {
                    let path = if multi {
                        suffixed_path(path, &art.summary.problem)
                    } else {
                        path.clone()
                    };
                    if let Err(e) = std::fs::write(&path, art.certificate.to_json_string()) {
                        let _ = writeln!(err, "error: cannot write '{}': {e}", path.display());
                        worst = worst.max(EXIT_ERROR);
                    }
                }
                match config.format {
                    OutputFormat::Text => {
                        if multi && i > 0 {
                            let _ = writeln!(out);
                        }
                        let _ = write!(out, "{}", render_summary_text(&art.summary));
                    }
                    OutputFormat::Json => {
                        let _ = writeln!(
                            out,
                            "{}",
                            serde_json::to_string_pretty(&art.summary).unwrap()
                        );
                    }
                }
                worst = worst.max(art.summary.exit_code);
            }
        }
    }
    worst
}

fn run_one(config: &RunConfig, source: &ProblemSource) -> Result<SolveArtifacts, String> {
    let problem = load_problem(source)?;
    run_solver(
        &problem,
        config.solver,
        &config.overrides,
        config.hint.as_deref(),
        config.x0.as_deref(),
        config.seed,
    )
}

/// A row of an externally produced iterate sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceRow {
    pub x: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    pub omega: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Kkt,
    Akkt,
    Cakkt,
    Akkt2,
    Wsonc,
    Robinson,
    Wcr,
}

impl CheckKind {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "kkt" => Ok(CheckKind::Kkt),
            "akkt" => Ok(CheckKind::Akkt),
            "cakkt" => Ok(CheckKind::Cakkt),
            "akkt2" => Ok(CheckKind::Akkt2),
            "wsonc" => Ok(CheckKind::Wsonc),
            "robinson" => Ok(CheckKind::Robinson),
            "wcr" => Ok(CheckKind::Wcr),
            other => Err(format!(
                "unknown check '{other}' (expected kkt, akkt, cakkt, akkt2, wsonc, robinson, wcr)"
            )),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckKind::Kkt => "kkt",
            CheckKind::Akkt => "akkt",
            CheckKind::Cakkt => "cakkt",
            CheckKind::Akkt2 => "akkt2",
            CheckKind::Wsonc => "wsonc",
            CheckKind::Robinson => "robinson",
            CheckKind::Wcr => "wcr",
        }
    }
}

pub fn parse_checks(text: &str) -> Result<Vec<CheckKind>, String> {
    text.split(',')
        .map(|t| CheckKind::parse(t.trim()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CheckRequest {
    pub problem: ProblemSource,
    pub x: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
    pub sequence_path: Option<PathBuf>,
    pub checks: Vec<CheckKind>,
    pub tol: f64,
    pub seed: u64,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub pass: bool,
    pub residual: f64,
    pub detail: String,
}

fn validate_omega(problem: &Problem, omega: &[f64]) -> Result<BlockVector, String> {
    if omega.len() != problem.total_cone_dim() {
        return Err(format!(
            "omega has {} entries, the cone product has total dimension {}",
            omega.len(),
            problem.total_cone_dim()
        ));
    }
    let bv = BlockVector::new(problem.cone().clone(), omega.to_vec());
    for i in 0..problem.cone().block_count() {
        let b = bv.block(i);
        let eta1 = if b.len() == 1 { b[0] } else { b[0] - norm(&b[1..]) };
        if eta1 < -1e-9 {
            return Err(format!(
                "omega block {} lies outside the cone (eta1 = {eta1:.3e})",
                i + 1
            ));
        }
    }
    Ok(bv)
}

/// Runs the requested checks; one outcome per check.
pub fn run_checks(req: &CheckRequest) -> Result<Vec<CheckOutcome>, String> {
    let problem = load_problem(&req.problem)?;
    let tol = req.tol;

    // Assemble the evaluation data: a single point or a sequence.
    let sequence: Vec<SequenceRow> = if let Some(path) = &req.sequence_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        let x = req.x.clone().ok_or("check needs --x or --sequence")?;
        if x.len() != problem.dim() {
            return Err(format!(
                "x has {} entries, problem has {} variables",
                x.len(),
                problem.dim()
            ));
        }
        vec![SequenceRow {
            x,
            mu: req.mu.clone().unwrap_or_else(|| vec![0.0; problem.equality_count()]),
            omega: req
                .omega
                .clone()
                .unwrap_or_else(|| vec![0.0; problem.total_cone_dim()]),
            rho: 1.0,
        }]
    };
    if sequence.is_empty() {
        return Err("sequence file contains no rows".into());
    }
    for (i, row) in sequence.iter().enumerate() {
        if row.x.len() != problem.dim()
            || row.mu.len() != problem.equality_count()
            || row.omega.len() != problem.total_cone_dim()
        {
            return Err(format!("sequence row {i}: dimension mismatch"));
        }
    }
    let last = sequence.last().unwrap();
    let omega_last = validate_omega(&problem, &last.omega)?;

    let mut outcomes = Vec::new();
    for check in &req.checks {
        let outcome = match check {
            CheckKind::Kkt => {
                let fo = first_order_residuals(&problem, &last.x, &last.mu, &omega_last)
                    .map_err(|e| e.to_string())?;
                let residual = fo
                    .stationarity
                    .max(fo.feasibility)
                    .max(fo.akkt_complementarity);
                CheckOutcome {
                    check: "kkt".into(),
                    pass: residual <= tol,
                    residual,
                    detail: format!(
                        "stationarity {:.3e}, feasibility {:.3e}, complementarity {:.3e}",
                        fo.stationarity, fo.feasibility, fo.akkt_complementarity
                    ),
                }
            }
            CheckKind::Akkt | CheckKind::Cakkt => {
                // Residuals must have decayed to tol at the end of the
                // sequence; for the boundary blocks either a vanishing
                // multiplier or ray alignment counts, whichever is
                // smaller. A single point is the constant sequence.
                let fo = first_order_residuals(&problem, &last.x, &last.mu, &omega_last)
                    .map_err(|e| e.to_string())?;
                let ray = akkt_ray_control(&problem, &last.x, &omega_last);
                let comp = if *check == CheckKind::Cakkt {
                    fo.cakkt_complementarity
                } else {
                    fo.akkt_complementarity
                };
                let residual = fo.stationarity.max(fo.feasibility).max(comp);
                let name = check.as_str();
                CheckOutcome {
                    check: name.into(),
                    pass: residual <= tol,
                    residual,
                    detail: format!(
                        "final stationarity {:.3e}, feasibility {:.3e}, complementarity {:.3e}, boundary-ray control {:.3e} over {} rows",
                        fo.stationarity, fo.feasibility, comp, ray, sequence.len()
                    ),
                }
            }
            CheckKind::Akkt2 => {
                let fo = first_order_residuals(&problem, &last.x, &last.mu, &omega_last)
                    .map_err(|e| e.to_string())?;
                let row = certify_iterate_local_sets(
                    &problem,
                    sequence.len() - 1,
                    &last.x,
                    &last.mu,
                    &omega_last,
                    last.rho,
                    tol.max(1e-10),
                    true,
                )
                .map_err(|e| e.to_string())?;
                let first_order = fo
                    .stationarity
                    .max(fo.feasibility)
                    .max(fo.akkt_complementarity);
                let residual = first_order.max(row.so_residual);
                CheckOutcome {
                    check: "akkt2".into(),
                    pass: residual <= tol,
                    residual,
                    detail: format!(
                        "first-order {:.3e}, certificate matrix min eigenvalue {:.6}, so_residual {:.3e}",
                        first_order, row.min_eigenvalue, row.so_residual
                    ),
                }
            }
            CheckKind::Wsonc => {
                let report = wsonc_check(&problem, &last.x, &last.mu, &omega_last, tol)
                    .map_err(|e| e.to_string())?;
                let residual = if report.min_eigenvalue.is_finite() {
                    (-report.min_eigenvalue).max(0.0)
                } else {
                    0.0
                };
                CheckOutcome {
                    check: "wsonc".into(),
                    pass: report.pass,
                    residual,
                    detail: if report.basis.nullity() == 0 {
                        "subspace is trivial; vacuous pass".to_string()
                    } else {
                        format!(
                            "reduced min eigenvalue {:.9} on a {}-dimensional subspace",
                            report.min_eigenvalue,
                            report.basis.nullity()
                        )
                    },
                }
            }
            CheckKind::Robinson => {
                let report = robinson_measure(&problem, &last.x).map_err(|e| e.to_string())?;
                let residual = report.measure.map(|t| (-t).max(0.0)).unwrap_or(f64::INFINITY);
                CheckOutcome {
                    check: "robinson".into(),
                    pass: report.pass,
                    residual,
                    detail: match report.measure {
                        Some(t) => format!(
                            "Dh rank {}/{}, interior margin {t:.6e}",
                            report.dh_rank, report.equality_count
                        ),
                        None => format!(
                            "Dh rank {}/{}: rank-deficient, constraint qualification fails",
                            report.dh_rank, report.equality_count
                        ),
                    },
                }
            }
            CheckKind::Wcr => {
                let radius = 0.1 * (1.0 + norm(&last.x));
                let report = wcr_probe(&problem, &last.x, radius, 20, req.seed);
                CheckOutcome {
                    check: "wcr".into(),
                    pass: report.constant,
                    residual: if report.constant { 0.0 } else { 1.0 },
                    detail: format!(
                        "center rank {}, sampled ranks {:?} in radius {:.3e} (probe only)",
                        report.center_rank, report.sampled_ranks, radius
                    ),
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Check command: one PASS/FAIL line per requested check; exit 0 iff all
/// pass.
pub fn cmd_check(req: &CheckRequest, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match run_checks(req) {
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
        Ok(outcomes) => {
            match req.format {
                OutputFormat::Text => {
                    for o in &outcomes {
                        let _ = writeln!(
                            out,
                            "{}: {} (residual {:.3e}) - {}",
                            o.check,
                            if o.pass { "PASS" } else { "FAIL" },
                            o.residual,
                            o.detail
                        );
                    }
                }
                OutputFormat::Json => {
                    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&outcomes).unwrap());
                }
            }
            if outcomes.iter().all(|o| o.pass) {
                EXIT_OK
            } else {
                1
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ListRow {
    pub name: String,
    pub n: usize,
    pub equalities: usize,
    pub cone_dims: Vec<usize>,
    pub known_solution: bool,
}

pub fn registry_rows() -> Vec<ListRow> {
    if cfg!(feature = "empty-registry") {
        return Vec::new();
    }
    builtin_names()
        .into_iter()
        .map(|name| {
            let p = builtin(name).expect("registered problems construct");
            ListRow {
                name: name.to_string(),
                n: p.dim(),
                equalities: p.equality_count(),
                cone_dims: p.cone().dims().to_vec(),
                known_solution: p.known_solution().is_some(),
            }
        })
        .collect()
}

/// List command: prints the registry; exit 0.
pub fn cmd_list(format: OutputFormat, out: &mut dyn Write) -> i32 {
    let rows = registry_rows();
    match format {
        OutputFormat::Text => {
            let _ = writeln!(
                out,
                "{:<16} {:>3} {:>4}  {:<12} {}",
                "name", "n", "eq", "cone dims", "known solution"
            );
            for r in &rows {
                let dims = r
                    .cone_dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join("x");
                let _ = writeln!(
                    out,
                    "{:<16} {:>3} {:>4}  {:<12} {}",
                    r.name,
                    r.n,
                    r.equalities,
                    dims,
                    if r.known_solution { "yes" } else { "no" }
                );
            }
        }
        OutputFormat::Json => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&rows).unwrap());
        }
    }
    EXIT_OK
}

// Re-exported for the acceptance suite, which recomputes certificate
// matrices from stored rows.
pub use nlsocp::conditions::CertRow;

/// The quadratic form of the second-order certificate matrix of a stored
/// row along a direction, rebuilt from the row's own data.
pub fn witness_form_from_row(
    problem: &Problem,
    row: &CertRow,
    sets_at: &[f64],
    d: &[f64],
) -> Result<f64, String> {
    let omega = BlockVector::new(problem.cone().clone(), row.omega.clone());
    let sets = index_sets(problem, sets_at, 1e-6, 1e-6, Some(&omega));
    let params = match &row.params {
        Some(p) => p.clone(),
        None => {
            let mut p = akkt2_penalty_params(problem, &row.x, row.rho, &sets)
                .map_err(|e| e.to_string())?;
            p.delta += 3.0
                * row
                    .x
                    .iter()
                    .zip(sets_at)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            p
        }
    };
    let a = akkt2_matrix(problem, &row.x, &row.mu, &omega, &params, &sets)
        .map_err(|e| e.to_string())?;
    Ok(a.quadratic_form(d))
}
