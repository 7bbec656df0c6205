//! Command implementations. Each writes its data files plus `metadata.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::output::{fmt12, fmt_opt, write_json, Csv};
use crate::constrained::{max_duration, solve_constrained, CaseLabel, ConstrainedPolicy, FeasibilityReport};
use crate::error::{Error, Result};
use crate::oracle::{grid_search, OracleResult};
use crate::params::{EpidemicParams, SolverOptions};
use crate::pmp::{verify_policy, PmpReport};

/// Oracle agreement thresholds reported in `comparison.json`.
pub const ORACLE_TIME_GAP: f64 = 0.1;
pub const ORACLE_VALUE_GAP: f64 = 1e-6;

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a ScenarioConfig,
    workers: usize,
    elapsed_seconds: f64,
}

fn write_metadata(out: &Path, command: &str, cfg: &ScenarioConfig, started: Instant) -> Result<()> {
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        workers: rayon::current_num_threads(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("metadata.json"), &meta).map_err(io_err)
}

pub(crate) fn io_err(e: std::io::Error) -> Error {
    Error::Numerical(format!("i/o failure: {e}"))
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)
}

#[derive(Debug, Serialize)]
struct InfeasibilityReport<'a> {
    command: &'a str,
    reason: String,
    params: EpidemicParams,
}

/// Writes `infeasibility.json` for an infeasible scenario.
pub fn write_infeasibility(out: &Path, command: &str, params: &EpidemicParams, reason: &str) -> Result<()> {
    prepare(out)?;
    let report = InfeasibilityReport { command, reason: reason.to_string(), params: *params };
    write_json(&out.join("infeasibility.json"), &report).map_err(io_err)
}

#[derive(Debug, Serialize)]
pub struct PolicyFile {
    pub case: CaseLabel,
    pub t1: f64,
    pub t2: f64,
    pub mu: f64,
    pub x_inf: f64,
    pub verified: bool,
    pub feasibility: FeasibilityReport,
    pub pmp: PmpReport,
    pub policy: ConstrainedPolicy,
}

/// Solves one scenario and writes `policy.json` and `trajectory.csv`.
pub fn cmd_solve(cfg: &ScenarioConfig, out: &Path) -> Result<PolicyFile> {
    let started = Instant::now();
    let params = cfg.params();
    let opts = cfg.options();
    let policy = solve_constrained(&params, &opts)?;
    let traj = policy.trajectory(&params, &opts)?;
    let pmp = verify_policy(&params, &opts, &policy)?;
    prepare(out)?;
    let mut csv = Csv::new(&["t", "x", "y", "v", "sigma"]);
    for s in traj.samples() {
        csv.row(&[fmt12(s.t), fmt12(s.x), fmt12(s.y), fmt12(s.v), fmt12(s.sigma)]);
    }
    csv.write(&out.join("trajectory.csv")).map_err(io_err)?;
    let file = PolicyFile {
        case: policy.case,
        t1: policy.t1,
        t2: policy.t2,
        mu: policy.mu,
        x_inf: policy.x_inf,
        verified: policy.verified,
        feasibility: policy.feasibility,
        pmp,
        policy,
    };
    write_json(&out.join("policy.json"), &file).map_err(io_err)?;
    write_metadata(out, "solve", cfg, started)?;
    Ok(file)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub case: Option<CaseLabel>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub mu: Option<f64>,
    pub x_inf: Option<f64>,
    pub oracle_t2: Option<f64>,
    pub oracle_mu: Option<f64>,
    pub pmp_ok: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Boundary {
    pub from: CaseLabel,
    pub to: CaseLabel,
    /// Largest tau seen with `from`.
    pub tau_low: f64,
    /// Smallest tau seen with `to`.
    pub tau_high: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub boundaries: Vec<Boundary>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub with_oracle: bool,
    /// Width below which transition brackets stop shrinking; no refinement if `None`.
    pub boundary_tol: Option<f64>,
}

/// The tau grid `start, start + step, ...` up to `end` inclusive.
pub fn tau_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() {
        return Err(Error::InvalidParams(format!("bad tau range {start}..{end} step {step}")));
    }
    if end < start {
        return Ok(Vec::new());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

fn sweep_row(base: &EpidemicParams, opts: &SolverOptions, cfg: &ScenarioConfig, tau: f64, with_oracle: bool) -> SweepRow {
    let params = EpidemicParams { tau, ..*base };
    let mut row = SweepRow {
        tau,
        case: None,
        t1: None,
        t2: None,
        mu: None,
        x_inf: None,
        oracle_t2: None,
        oracle_mu: None,
        pmp_ok: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let policy = solve_constrained(&params, opts)?;
        row.case = Some(policy.case);
        row.t1 = Some(policy.t1);
        row.t2 = Some(policy.t2);
        row.mu = Some(policy.mu);
        row.x_inf = Some(policy.x_inf);
        row.pmp_ok = Some(verify_policy(&params, opts, &policy)?.passed);
        if with_oracle {
            let r = grid_search(&params, opts, &cfg.oracle())?;
            row.oracle_t2 = Some(r.best.t2);
            row.oracle_mu = Some(r.best.mu);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn case_at(base: &EpidemicParams, opts: &SolverOptions, tau: f64) -> Result<CaseLabel> {
    Ok(solve_constrained(&EpidemicParams { tau, ..*base }, opts)?.case)
}

/// Shrinks `[lo, hi]` around the change from `from` to `to`. A third case found
/// in between splits the bracket, so every transition inside it is reported.
fn refine_boundary(
    base: &EpidemicParams,
    opts: &SolverOptions,
    from: CaseLabel,
    to: CaseLabel,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<Vec<Boundary>> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let c = case_at(base, opts, mid)?;
        if c == from {
            lo = mid;
        } else if c == to {
            hi = mid;
        } else {
            let mut left = refine_boundary(base, opts, from, c, lo, mid, tol)?;
            left.extend(refine_boundary(base, opts, c, to, mid, hi, tol)?);
            return Ok(left);
        }
    }
    Ok(vec![Boundary { from, to, tau_low: lo, tau_high: hi, tau: 0.5 * (lo + hi) }])
}

/// Solves every tau of the sweep and locates the case transitions.
pub fn run_sweep(cfg: &ScenarioConfig, spec: &SweepSpec) -> Result<SweepOutcome> {
    let base = cfg.params();
    let opts = cfg.options();
    let taus = tau_grid(spec.start, spec.end, spec.step)?;
    let rows: Vec<SweepRow> = taus.par_iter().map(|&tau| sweep_row(&base, &opts, cfg, tau, spec.with_oracle)).collect();
    let pairs: Vec<(f64, CaseLabel, f64, CaseLabel)> = rows
        .windows(2)
        .filter_map(|w| match (w[0].case, w[1].case) {
            (Some(a), Some(b)) if a != b => Some((w[0].tau, a, w[1].tau, b)),
            _ => None,
        })
        .collect();
    let boundaries: Vec<Result<Vec<Boundary>>> = pairs
        .par_iter()
        .map(|&(lo, a, hi, b)| match spec.boundary_tol {
            Some(tol) => refine_boundary(&base, &opts, a, b, lo, hi, tol),
            None => Ok(vec![Boundary { from: a, to: b, tau_low: lo, tau_high: hi, tau: 0.5 * (lo + hi) }]),
        })
        .collect();
    let mut flat = Vec::new();
    for b in boundaries {
        flat.extend(b?);
    }
    Ok(SweepOutcome { rows, boundaries: flat })
}

pub fn sweep_csv(rows: &[SweepRow]) -> Csv {
    let mut csv = Csv::new(&["tau", "case", "t1", "t2", "mu", "x_inf", "oracle_t2", "oracle_mu", "pmp_ok"]);
    for r in rows {
        let case = match (&r.case, &r.error) {
            (Some(c), _) => c.to_string(),
            (None, Some(_)) => "error".to_string(),
            (None, None) => String::new(),
        };
        csv.row(&[
            fmt12(r.tau),
            case,
            fmt_opt(r.t1),
            fmt_opt(r.t2),
            fmt_opt(r.mu),
            fmt_opt(r.x_inf),
            fmt_opt(r.oracle_t2),
            fmt_opt(r.oracle_mu),
            r.pmp_ok.map(|b| b.to_string()).unwrap_or_default(),
        ]);
    }
    csv
}

#[derive(Debug, Serialize)]
struct BoundariesFile<'a> {
    boundaries: &'a [Boundary],
    errors: Vec<(f64, &'a str)>,
}

pub fn cmd_sweep_tau(cfg: &ScenarioConfig, spec: &SweepSpec, out: &Path) -> Result<SweepOutcome> {
    let started = Instant::now();
    let outcome = run_sweep(cfg, spec)?;
    prepare(out)?;
    sweep_csv(&outcome.rows).write(&out.join("sweep.csv")).map_err(io_err)?;
    let errors = outcome.rows.iter().filter_map(|r| r.error.as_deref().map(|e| (r.tau, e))).collect();
    write_json(&out.join("boundaries.json"), &BoundariesFile { boundaries: &outcome.boundaries, errors }).map_err(io_err)?;
    write_metadata(out, "sweep-tau", cfg, started)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub t2: f64,
    pub mu: f64,
    pub x_inf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub case: CaseLabel,
    pub solver: PointSummary,
    pub oracle: PointSummary,
    pub t2_gap: f64,
    pub mu_gap: f64,
    pub x_inf_gap: f64,
    /// Distance of the oracle's mu from the longest admissible duration at its t2.
    pub border_gap: f64,
    pub lattice_spacing: (f64, f64),
    pub evaluations: usize,
    pub infeasible_coarse: usize,
    pub within_tolerance: bool,
}

/// Longest admissible strict duration at `t2` for the solver's region.
fn border_mu(params: &EpidemicParams, policy: &ConstrainedPolicy, t2: f64) -> f64 {
    match policy.geometry {
        Some(g) if t2 >= g.t_b => max_duration(params, &g, t2).unwrap_or(f64::NAN),
        _ => params.tau.min(params.horizon - t2),
    }
}

pub fn compare(params: &EpidemicParams, policy: &ConstrainedPolicy, oracle: &OracleResult) -> Comparison {
    let t2_gap = (oracle.best.t2 - policy.t2).abs();
    let mu_gap = (oracle.best.mu - policy.mu).abs();
    let x_inf_gap = (oracle.best.x_inf - policy.x_inf).abs();
    Comparison {
        case: policy.case,
        solver: PointSummary { t2: policy.t2, mu: policy.mu, x_inf: policy.x_inf },
        oracle: PointSummary { t2: oracle.best.t2, mu: oracle.best.mu, x_inf: oracle.best.x_inf },
        t2_gap,
        mu_gap,
        x_inf_gap,
        border_gap: (border_mu(params, policy, oracle.best.t2) - oracle.best.mu).abs(),
        lattice_spacing: oracle.spacing(),
        evaluations: oracle.evaluations,
        infeasible_coarse: oracle.surface.iter().filter(|p| !p.feasible).count(),
        within_tolerance: t2_gap <= ORACLE_TIME_GAP && mu_gap <= ORACLE_TIME_GAP && x_inf_gap <= ORACLE_VALUE_GAP,
    }
}

pub fn cmd_oracle(cfg: &ScenarioConfig, out: &Path) -> Result<Comparison> {
    let started = Instant::now();
    let params = cfg.params();
    let opts = cfg.options();
    let oracle = grid_search(&params, &opts, &cfg.oracle())?;
    let policy = solve_constrained(&params, &opts)?;
    let comparison = compare(&params, &policy, &oracle);
    prepare(out)?;
    let mut csv = Csv::new(&["t2", "mu", "x_inf", "feasible"]);
    for p in &oracle.surface {
        csv.row(&[fmt12(p.t2), fmt12(p.mu), fmt12(p.x_inf), p.feasible.to_string()]);
    }
    csv.write(&out.join("surface.csv")).map_err(io_err)?;
    write_json(&out.join("comparison.json"), &comparison).map_err(io_err)?;
    write_metadata(out, "oracle", cfg, started)?;
    Ok(comparison)
}

/// Reads the `policy` member of a `policy.json` written by `solve`.
pub fn load_policy(path: &PathBuf) -> std::result::Result<ConstrainedPolicy, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("invalid policy file {}: {e}", path.display()))?;
    let inner = value.get_mut("policy").map(serde_json::Value::take).unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| format!("invalid policy file {}: {e}", path.display()))
}

pub fn cmd_verify_pmp(cfg: &ScenarioConfig, policy: &ConstrainedPolicy, out: &Path) -> Result<PmpReport> {
    let started = Instant::now();
    let report = verify_policy(&cfg.params(), &cfg.options(), policy)?;
    prepare(out)?;
    write_json(&out.join("pmp_report.json"), &report).map_err(io_err)?;
    write_metadata(out, "verify-pmp", cfg, started)?;
    Ok(report)
}
