//! Adjoint back-integration and switching-function checks for a solved policy.
//!
//! With `H = sigma (beta + gamma x y (l2 - l1)) - gamma l2 y`, the costates obey
//! `l1' = (l1 - l2) gamma sigma y` and
//! `l2' = (l1 - l2) gamma sigma x + gamma l2 + eta`, where `eta = -gamma l1`
//! on hold arcs and zero elsewhere. The terminal values are the partials of
//! the final size with respect to the terminal state.

use serde::{Deserialize, Serialize};

use crate::constrained::{CaseLabel, ConstrainedPolicy};
use crate::dynamics::{integrate, Trajectory};
use crate::error::Result;
use crate::final_size::{dxinf_dx, dxinf_dy};
use crate::params::{EpidemicParams, SolverOptions};

/// Relative tolerance on the switching-function sign pattern.
pub const PHI_TOL: f64 = 1e-5;
/// Allowed drift of l2 along a hold arc.
pub const LAMBDA2_TOL: f64 = 1e-5;
/// Lower bound on the constraint multiplier and on the junction jump.
pub const MULTIPLIER_TOL: f64 = 1e-8;
/// Allowed relative spread of the Hamiltonian.
pub const HAMILTONIAN_TOL: f64 = 1e-4;
/// Budget slack above which the budget multiplier must vanish.
const SLACK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl PhaseTimes {
    pub fn of(policy: &ConstrainedPolicy) -> Self {
        PhaseTimes { t1: policy.t1, t2: policy.t2, t3: policy.t2 + policy.mu }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointSample {
    pub t: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub phi: f64,
    pub eta: f64,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSource {
    /// Makes the switching function vanish on the hold arc.
    BoundaryArc,
    /// Budget not exhausted, so its multiplier is zero.
    SlackBudget,
    /// Makes the switching function vanish where strict quarantine starts.
    StrictStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointPath {
    pub samples: Vec<AdjointSample>,
    /// Multiplier of the integral budget.
    pub beta: f64,
    pub beta_source: BetaSource,
    pub lambda0: f64,
    /// Jump of l2 at the hold entry, reconstructed from continuity of H.
    pub jump_nu: Option<f64>,
    pub x_terminal: f64,
}

fn arc_interval(traj: &Trajectory, i: usize) -> bool {
    traj.interval(i).2.is_arc()
}

/// Integrates the costates backward from T along the policy's forward path.
pub fn integrate_adjoint(params: &EpidemicParams, opts: &SolverOptions, policy: &ConstrainedPolicy) -> Result<AdjointPath> {
    let traj = integrate(params, &policy.schedule, opts.step)?;
    adjoint_along(params, &traj, policy)
}

pub fn adjoint_along(params: &EpidemicParams, traj: &Trajectory, policy: &ConstrainedPolicy) -> Result<AdjointPath> {
    let g = params.gamma;
    let end = traj.terminal();
    let sf = params.sigma_f;
    let n = traj.interval_count();
    let mut lam = vec![[0.0f64; 2]; n + 1];
    lam[n] = [dxinf_dx(end.x, end.y, sf)?, dxinf_dy(end.x, end.y, sf)?];

    for i in (0..n).rev() {
        let (a, b, seg) = traj.interval(i);
        let on_arc = seg.is_arc();
        let rhs = |t: f64, l: [f64; 2]| -> [f64; 2] {
            let [x, y, _] = traj.state_in(i, t);
            let s = seg.sigma(t);
            let eta = if on_arc { -g * l[0] } else { 0.0 };
            let d = l[0] - l[1];
            [d * g * s * y, d * g * s * x + g * l[1] + eta]
        };
        let h = a - b;
        let l = lam[i + 1];
        let k1 = rhs(b, l);
        let k2 = rhs(b + 0.5 * h, [l[0] + 0.5 * h * k1[0], l[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(b + 0.5 * h, [l[0] + 0.5 * h * k2[0], l[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(a, [l[0] + h * k3[0], l[1] + h * k3[1]]);
        lam[i] = [
            l[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            l[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
    }

    let samples = traj.samples();
    let switch_value = |k: usize| g * samples[k].x * samples[k].y * (lam[k][0] - lam[k][1]);
    let arc_nodes: Vec<usize> = (0..n).filter(|&i| arc_interval(traj, i)).collect();
    let slack = end.v - params.budget();
    let (beta, beta_source) = if let Some(&last) = arc_nodes.last() {
        // value at the exit, where strict quarantine starts
        (switch_value(last + 1).max(0.0), BetaSource::BoundaryArc)
    } else if slack > SLACK_TOL {
        (0.0, BetaSource::SlackBudget)
    } else {
        let k = nearest_node(traj, policy.t2);
        (switch_value(k).max(0.0), BetaSource::StrictStart)
    };

    let out: Vec<AdjointSample> = (0..=n)
        .map(|k| {
            let s = &samples[k];
            let seg_index = k.min(n - 1);
            let on_arc = arc_interval(traj, seg_index);
            let phi = beta + g * s.x * s.y * (lam[k][1] - lam[k][0]);
            AdjointSample {
                t: s.t,
                lambda1: lam[k][0],
                lambda2: lam[k][1],
                phi,
                eta: if on_arc { -g * lam[k][0] } else { 0.0 },
                hamiltonian: phi * s.sigma - g * lam[k][1] * s.y,
            }
        })
        .collect();

    let jump_nu = arc_nodes.first().map(|&i| {
        let s = &samples[i];
        let [l1, l2] = lam[i];
        let phi = beta + g * s.x * s.y * (l2 - l1);
        let h_plus = phi * s.sigma - g * l2 * s.y;
        let h_minus = phi * sf - g * l2 * s.y;
        (h_minus - h_plus) / (g * s.y * (sf * s.x - 1.0))
    });

    Ok(AdjointPath { samples: out, beta, beta_source, lambda0: 1.0, jump_nu, x_terminal: end.x })
}

fn nearest_node(traj: &Trajectory, t: f64) -> usize {
    let s = traj.samples();
    let k = s.partition_point(|p| p.t < t);
    if k == 0 {
        return 0;
    }
    if k >= s.len() {
        return s.len() - 1;
    }
    if (s[k].t - t).abs() < (t - s[k - 1].t).abs() {
        k
    } else {
        k - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmpCheck {
    pub name: String,
    pub passed: bool,
    /// Worst value of the checked quantity.
    pub magnitude: f64,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmpReport {
    pub case: CaseLabel,
    pub phases: PhaseTimes,
    pub beta: f64,
    pub beta_source: BetaSource,
    pub jump_nu: Option<f64>,
    pub lambda1_terminal: f64,
    pub lambda2_terminal: f64,
    pub phi_scale: f64,
    pub hamiltonian_spread: f64,
    pub checks: Vec<PmpCheck>,
    pub notes: Vec<String>,
    pub passed: bool,
}

struct CheckBuilder {
    name: &'static str,
    worst: f64,
    first_violation: Option<f64>,
}

impl CheckBuilder {
    fn new(name: &'static str) -> Self {
        CheckBuilder { name, worst: 0.0, first_violation: None }
    }

    /// Records `excess`, a violation whenever it is positive.
    fn record(&mut self, t: f64, excess: f64, magnitude: f64) {
        if magnitude.abs() > self.worst.abs() {
            self.worst = magnitude;
        }
        if excess > 0.0 && self.first_violation.is_none() {
            self.first_violation = Some(t);
        }
    }

    fn finish(self) -> PmpCheck {
        PmpCheck {
            name: self.name.to_string(),
            passed: self.first_violation.is_none(),
            magnitude: self.worst,
            first_violation: self.first_violation,
        }
    }
}

fn single(name: &str, passed: bool, magnitude: f64, t: Option<f64>) -> PmpCheck {
    PmpCheck { name: name.to_string(), passed, magnitude, first_violation: if passed { None } else { t } }
}

/// Compares the switching function with the structure the policy implies.
pub fn check_switching_structure(
    params: &EpidemicParams,
    adjoint: &AdjointPath,
    policy: &ConstrainedPolicy,
) -> PmpReport {
    let phases = PhaseTimes::of(policy);
    let s = &adjoint.samples;
    let last = s.last().expect("adjoint has samples");
    let phi_scale = s.iter().map(|p| p.phi.abs()).fold(0.0, f64::max);
    let tol = PHI_TOL * phi_scale;
    let has_arc = policy.t2 > policy.t1 && policy.case.is_constrained();
    let mut notes = Vec::new();
    let mut checks = Vec::new();

    // l1(T) carries the sign of 1 - sigma_f x(T); it is negative when strict
    // quarantine runs until T with x still above the herd threshold
    let x_end = adjoint.x_terminal;
    let above_herd = params.sigma_f * x_end > 1.0;
    let l1_ok = if above_herd { last.lambda1 < 0.0 } else { last.lambda1 > 0.0 };
    checks.push(single("terminal_signs", l1_ok && last.lambda2 < 0.0, last.lambda1, Some(last.t)));
    if above_herd {
        notes.push("x(T) above 1/sigma_f, so lambda1(T) < 0".to_string());
    }

    let mut free_before = CheckBuilder::new("phi_positive_before_hold");
    let mut on_arc = CheckBuilder::new("phi_zero_on_hold");
    let mut strict = CheckBuilder::new("phi_negative_during_strict");
    let mut free_after = CheckBuilder::new("phi_nonnegative_after_strict");
    for p in s.iter() {
        let t = p.t;
        if t > 0.0 && t < phases.t1 {
            free_before.record(t, -p.phi - tol, p.phi);
        } else if has_arc && t >= phases.t1 && t <= phases.t2 {
            on_arc.record(t, p.phi.abs() - tol, p.phi);
        } else if t > phases.t2 && t < phases.t3 {
            strict.record(t, p.phi - tol, p.phi);
        } else if t > phases.t3 && t < last.t {
            free_after.record(t, -p.phi - tol, p.phi);
        }
    }
    checks.push(free_before.finish());
    if has_arc {
        checks.push(on_arc.finish());
    }
    checks.push(strict.finish());
    checks.push(free_after.finish());

    if has_arc {
        let arc: Vec<&AdjointSample> = s.iter().filter(|p| p.t >= phases.t1 && p.t <= phases.t2).collect();
        let l2_entry = arc.first().map_or(0.0, |p| p.lambda2);
        let mut drift = CheckBuilder::new("lambda2_constant_on_hold");
        let mut eta = CheckBuilder::new("eta_nonnegative_on_hold");
        for p in &arc {
            let d = p.lambda2 - l2_entry;
            drift.record(p.t, d.abs() - LAMBDA2_TOL, d);
            eta.record(p.t, -p.eta - MULTIPLIER_TOL, p.eta.min(0.0));
        }
        checks.push(drift.finish());
        checks.push(eta.finish());
        let nu = adjoint.jump_nu.unwrap_or(0.0);
        checks.push(single("jump_nonnegative", nu >= -MULTIPLIER_TOL, nu, Some(phases.t1)));
    } else {
        notes.push("no boundary arc".to_string());
    }

    let h_max = s.iter().map(|p| p.hamiltonian).fold(f64::NEG_INFINITY, f64::max);
    let h_min = s.iter().map(|p| p.hamiltonian).fold(f64::INFINITY, f64::min);
    let h_scale = s.iter().map(|p| p.hamiltonian.abs()).fold(0.0, f64::max);
    let spread = if h_scale > 0.0 { (h_max - h_min) / h_scale } else { 0.0 };
    let h_first = s.first().map_or(0.0, |p| p.hamiltonian);
    let h_violation = s
        .iter()
        .find(|p| (p.hamiltonian - h_first).abs() > HAMILTONIAN_TOL * h_scale)
        .map(|p| p.t);
    checks.push(single("hamiltonian_constant", spread <= HAMILTONIAN_TOL, spread, h_violation));

    let slack = policy.feasibility.v_terminal - params.budget();
    let complementarity = adjoint.beta * slack.max(0.0);
    let comp_ok = slack <= SLACK_TOL || adjoint.beta <= tol.max(f64::MIN_POSITIVE);
    checks.push(single("budget_complementarity", comp_ok, complementarity, Some(last.t)));

    notes.push(match adjoint.beta_source {
        BetaSource::BoundaryArc => "budget multiplier estimated from the hold arc".to_string(),
        BetaSource::SlackBudget => "budget slack, multiplier set to zero".to_string(),
        BetaSource::StrictStart => "budget multiplier estimated at the start of strict quarantine".to_string(),
    });

    let passed = checks.iter().all(|c| c.passed);
    PmpReport {
        case: policy.case,
        phases,
        beta: adjoint.beta,
        beta_source: adjoint.beta_source,
        jump_nu: adjoint.jump_nu,
        lambda1_terminal: last.lambda1,
        lambda2_terminal: last.lambda2,
        phi_scale,
        hamiltonian_spread: spread,
        checks,
        notes,
        passed,
    }
}

/// Back-integrates and checks in one call.
pub fn verify_policy(params: &EpidemicParams, opts: &SolverOptions, policy: &ConstrainedPolicy) -> Result<PmpReport> {
    let adjoint = integrate_adjoint(params, opts, policy)?;
    Ok(check_switching_structure(params, &adjoint, policy))
}
