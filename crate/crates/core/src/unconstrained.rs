//! Optimal single strict-quarantine window when the infected cap is ignored.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, ControlSchedule, EventKind, Trajectory};
use crate::error::{Error, Result};
use crate::final_size::x_infinity;
use crate::params::{EpidemicParams, SolverOptions};
use crate::roots::bisect_values;

/// Threshold comparisons resolve ties within this band toward the lower case.
pub(crate) const GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnconstrainedCase {
    /// Quarantine starts immediately.
    #[serde(rename = "1.1")]
    Immediate,
    /// Interior start, full budget used.
    #[serde(rename = "1.2")]
    Interior,
    /// Starts at T - tau, full budget used.
    #[serde(rename = "1.3")]
    LatestFull,
    /// Runs until T with less than the full budget.
    #[serde(rename = "1.4")]
    RunsToHorizon,
}

impl fmt::Display for UnconstrainedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnconstrainedCase::Immediate => "1.1",
            UnconstrainedCase::Interior => "1.2",
            UnconstrainedCase::LatestFull => "1.3",
            UnconstrainedCase::RunsToHorizon => "1.4",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedPolicy {
    pub t0: f64,
    pub mu0: f64,
    pub case: UnconstrainedCase,
    pub x_inf: f64,
}

impl UnconstrainedPolicy {
    pub fn schedule(&self, params: &EpidemicParams) -> Result<ControlSchedule> {
        ControlSchedule::strict_window(params, self.t0, self.mu0)
    }
}

/// Final susceptible fraction reached after a trajectory ends at T with free dynamics.
pub(crate) fn terminal_x_inf(params: &EpidemicParams, traj: &Trajectory) -> Result<f64> {
    let end = traj.terminal();
    Ok(x_infinity(end.x, end.y, params.sigma_f)?.x_inf)
}

/// Window `[t, t + tau]`, or `[t, T]` once it no longer fits.
fn window(params: &EpidemicParams, t: f64) -> (f64, f64) {
    let end = (t + params.tau).min(params.horizon);
    (t, end - t)
}

fn check_time(params: &EpidemicParams, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= params.horizon) {
        return Err(Error::Domain { t, horizon: params.horizon });
    }
    Ok(())
}

/// Integral of `(sigma_f x - 1) / y` over the strict window starting at `t`.
pub fn w_function(params: &EpidemicParams, opts: &SolverOptions, t: f64) -> Result<f64> {
    check_time(params, t)?;
    let (start, len) = window(params, t);
    let schedule = ControlSchedule::strict_window(params, start, len)?;
    let traj = integrate(params, &schedule, opts.step)?;
    let sf = params.sigma_f;
    Ok(traj.quadrature(start, start + len, |_, x, y| (sf * x - 1.0) / y))
}

/// `1 / (gamma y(t))` along the free path up to `t`.
pub fn alpha_function(params: &EpidemicParams, opts: &SolverOptions, t: f64) -> Result<f64> {
    check_time(params, t)?;
    let schedule = ControlSchedule::strict_window(params, t, params.horizon - t)?;
    let traj = integrate(params, &schedule, opts.step)?;
    Ok(1.0 / (params.gamma * traj.y_at(t)))
}

pub fn solve_unconstrained(params: &EpidemicParams, opts: &SolverOptions) -> Result<UnconstrainedPolicy> {
    let horizon = params.horizon;
    let latest = horizon - params.tau;
    let w = |t: f64| w_function(params, opts, t);

    let w_start = w(0.0)?;
    let (t0, mu0, case) = if w_start <= GUARD {
        (0.0, params.tau, UnconstrainedCase::Immediate)
    } else {
        let w_latest = w(latest)?;
        if w_latest <= GUARD {
            let t = bisect_values(w, (0.0, w_start), (latest, w_latest), opts.root_tol)?;
            (t, params.tau, UnconstrainedCase::Interior)
        } else {
            let alpha_latest = alpha_function(params, opts, latest)?;
            if w_latest <= alpha_latest + GUARD {
                (latest, params.tau, UnconstrainedCase::LatestFull)
            } else {
                let gap = |t: f64| Ok(w_function(params, opts, t)? - alpha_function(params, opts, t)?);
                let at_end = gap(horizon)?;
                let t = bisect_values(gap, (latest, w_latest - alpha_latest), (horizon, at_end), opts.root_tol)?;
                (t, horizon - t, UnconstrainedCase::RunsToHorizon)
            }
        }
    };
    let schedule = ControlSchedule::strict_window(params, t0, mu0)?;
    let traj = integrate(params, &schedule, opts.step)?;
    Ok(UnconstrainedPolicy { t0, mu0, case, x_inf: terminal_x_inf(params, &traj)? })
}

/// Time and value of the largest infected fraction under the unconstrained optimum.
pub fn unconstrained_peak(params: &EpidemicParams, opts: &SolverOptions) -> Result<(f64, f64)> {
    let policy = solve_unconstrained(params, opts)?;
    peak_of(params, opts, &policy)
}

pub(crate) fn peak_of(params: &EpidemicParams, opts: &SolverOptions, policy: &UnconstrainedPolicy) -> Result<(f64, f64)> {
    let traj = integrate(params, &policy.schedule(params)?, opts.step)?;
    let (t_max, y_max) = traj.max_y();
    let t = traj
        .locate(EventKind::YPeak, (t_max - 2.0 * opts.step, t_max + 2.0 * opts.step), opts.event_tol)
        .unwrap_or(t_max);
    Ok((t, y_max.max(traj.y_at(t))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn empty_window_gives_zero() {
        let p = EpidemicParams { tau: 0.0, ..EpidemicParams::reference(0.06, 80.0) };
        for t in [0.0, 100.0, 300.0] {
            assert_eq!(w_function(&p, &opts(), t).unwrap(), 0.0);
        }
    }

    #[test]
    fn alpha_is_reciprocal_of_gamma_y() {
        let p = EpidemicParams::reference(0.06, 150.0);
        let t = 230.0;
        let a = alpha_function(&p, &opts(), t).unwrap();
        let free = integrate(&p, &ControlSchedule::constant(p.horizon, p.sigma_f).unwrap(), 0.01).unwrap();
        assert!(a > 0.0);
        assert!((a - 1.0 / (p.gamma * free.y_at(t))).abs() / a < 1e-8);
    }

    #[test]
    fn w_matches_independent_quadrature() {
        // Simpson on a 4x finer grid of the dense output, on a 4x finer RK4 path
        let p = EpidemicParams::reference(0.06, 80.0);
        let fine = SolverOptions::with_step(0.0025);
        for t in [200.0, 242.0, 280.0] {
            let coarse = w_function(&p, &opts(), t).unwrap();
            let s = ControlSchedule::strict_window(&p, t, p.tau).unwrap();
            let traj = integrate(&p, &s, fine.step).unwrap();
            let n = 64_000;
            let h = p.tau / n as f64;
            let g = |r: f64| {
                let st = traj.state_at(r);
                (p.sigma_f * st[0] - 1.0) / st[1]
            };
            let mut acc = g(t) + g(t + p.tau);
            for k in 1..n {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(t + k as f64 * h);
            }
            let oracle = acc * h / 3.0;
            assert!((coarse - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "t = {t}: {coarse} vs {oracle}");
        }
    }

    #[test]
    fn case_labels_display() {
        assert_eq!(UnconstrainedCase::Interior.to_string(), "1.2");
        assert_eq!(UnconstrainedCase::RunsToHorizon.to_string(), "1.4");
    }
}
