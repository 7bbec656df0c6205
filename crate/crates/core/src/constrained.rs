//! Optimal control with the infected fraction capped at K.
//!
//! When the unconstrained optimum overshoots the cap, the optimal control is
//! free until the cap is reached at `t_b`, holds y at K until `t2`, applies
//! strict quarantine for `mu = G(t2)` and is free again afterwards.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{boundary_x, integrate, ControlSchedule, EventKind, SegmentKind, Trajectory};
use crate::error::{Error, Result};
use crate::final_size::x_infinity;
use crate::params::{EpidemicParams, SolverOptions};
use crate::roots::{bisect, bisect_values, scan_bracket};
use crate::unconstrained::{peak_of, solve_unconstrained, terminal_x_inf, UnconstrainedCase, UnconstrainedPolicy, GUARD};

/// Points used by the bracketing scans that precede every bisection.
pub const SCAN_POINTS: usize = 200;
/// Tolerance for the closed-form characteristic times.
const GEOMETRY_TOL: f64 = 1e-10;
/// Largest y allowed by the feasibility report.
const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseLabel {
    Unconstrained(UnconstrainedCase),
    /// Strict quarantine starts at an interior zero of w_b, limited by the budget.
    Interior,
    /// Starts at the crossover t_c.
    Crossover,
    /// Runs to T from an interior zero of w_b - 1/(gamma K).
    RunsToHorizon,
}

impl CaseLabel {
    pub fn is_constrained(&self) -> bool {
        !matches!(self, CaseLabel::Unconstrained(_))
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseLabel::Unconstrained(c) => c.fmt(f),
            CaseLabel::Interior => f.write_str("2.1"),
            CaseLabel::Crossover => f.write_str("2.2"),
            CaseLabel::RunsToHorizon => f.write_str("2.3"),
        }
    }
}

impl std::str::FromStr for CaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "1.1" => CaseLabel::Unconstrained(UnconstrainedCase::Immediate),
            "1.2" => CaseLabel::Unconstrained(UnconstrainedCase::Interior),
            "1.3" => CaseLabel::Unconstrained(UnconstrainedCase::LatestFull),
            "1.4" => CaseLabel::Unconstrained(UnconstrainedCase::RunsToHorizon),
            "2.1" => CaseLabel::Interior,
            "2.2" => CaseLabel::Crossover,
            "2.3" => CaseLabel::RunsToHorizon,
            other => return Err(Error::InvalidParams(format!("unknown case label {other:?}"))),
        })
    }
}

impl Serialize for CaseLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaseLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Characteristic times of the boundary region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGeometry {
    /// First time the free path reaches the cap.
    pub t_b: f64,
    /// x at `t_b`.
    pub x_b: f64,
    /// Time the hold arc brings x down to 1/sigma_f, capped at T.
    pub t_m: f64,
    /// Zero of F, or `t_m` when F stays nonnegative.
    pub t_f: f64,
    /// Crossover of F(t2) and T - t2.
    pub t_c: f64,
    /// Where x at the end of the budget-limited window drops below 1/sigma_f.
    pub s0: Option<f64>,
}

impl RegionGeometry {
    /// Schedule holding y at K on `[t_b, t2]`, strict for `mu`, free afterwards.
    pub fn schedule(&self, params: &EpidemicParams, t2: f64, mu: f64) -> Result<ControlSchedule> {
        ControlSchedule::with_hold(params, self.t_b, self.x_b, params.cap, t2, mu)
    }
}

/// Free path under sigma_f on `[0, T]`.
pub(crate) fn free_trajectory(params: &EpidemicParams, opts: &SolverOptions) -> Result<Trajectory> {
    integrate(params, &ControlSchedule::constant(params.horizon, params.sigma_f)?, opts.step)
}

/// First time the unconstrained optimum reaches K, or `None` when it stays below.
pub fn hitting_time_tb(params: &EpidemicParams, opts: &SolverOptions) -> Result<Option<f64>> {
    let policy = solve_unconstrained(params, opts)?;
    hitting_time_for(params, opts, &policy)
}

fn hitting_time_for(
    params: &EpidemicParams,
    opts: &SolverOptions,
    policy: &UnconstrainedPolicy,
) -> Result<Option<f64>> {
    let (_, y_max) = peak_of(params, opts, policy)?;
    if y_max <= params.cap + GUARD {
        return Ok(None);
    }
    let free = free_trajectory(params, opts)?;
    Ok(free.locate(EventKind::YRisesTo(params.cap), (0.0, params.horizon), opts.event_tol))
}

/// Longest strict quarantine allowed by the budget after leaving the hold at `t2`.
pub fn budget_duration(params: &EpidemicParams, geom: &RegionGeometry, t2: f64) -> Result<f64> {
    let t_max = geom.t_b + (geom.x_b - 1.0 / params.sigma_f) / params.drain(params.cap);
    if t2 < geom.t_b - GEOMETRY_TOL {
        return Err(Error::Domain { t: t2, horizon: params.horizon });
    }
    if t2 > t_max + GEOMETRY_TOL {
        let x = boundary_x(params, geom.x_b, geom.t_b, t2).unwrap_or(0.0);
        return Err(Error::ArcOverrun { t: t2, x });
    }
    let gk = params.drain(params.cap);
    let ds = params.sigma_s - params.sigma_f;
    let elapsed = (t2 - geom.t_b).max(0.0);
    Ok(params.tau + params.sigma_f * elapsed / ds + (1.0 - gk * elapsed / geom.x_b).ln() / (gk * ds))
}

/// `G(t2) = min(F(t2), T - t2)`.
pub fn max_duration(params: &EpidemicParams, geom: &RegionGeometry, t2: f64) -> Result<f64> {
    Ok(budget_duration(params, geom, t2)?.min(params.horizon - t2).max(0.0))
}

/// Geometry for a hold entered at `(t_b, x_b)`; `s0` is left unset.
pub fn geometry_from_entry(params: &EpidemicParams, t_b: f64, x_b: f64) -> Result<RegionGeometry> {
    if !(params.sigma_f * x_b > 1.0) {
        return Err(Error::Numerical(format!(
            "cap reached at t = {t_b} with x = {x_b} at or below 1/sigma_f"
        )));
    }
    let gk = params.drain(params.cap);
    let t_m = (t_b + (x_b - 1.0 / params.sigma_f) / gk).min(params.horizon);
    let mut geom = RegionGeometry { t_b, x_b, t_m, t_f: t_m, t_c: t_b, s0: None };
    let f = |t: f64| budget_duration(params, &geom, t);
    let f_m = f(t_m)?;
    let t_f = if f_m >= 0.0 { t_m } else { bisect_values(f, (t_b, params.tau), (t_m, f_m), GEOMETRY_TOL)? };
    geom.t_f = t_f;
    let h = |t: f64| Ok(budget_duration(params, &geom, t)? - (params.horizon - t));
    let h_b = h(t_b)?;
    let h_f = h(t_f)?;
    geom.t_c = if h_b >= 0.0 {
        t_b
    } else if h_f < 0.0 {
        t_f
    } else {
        bisect_values(h, (t_b, h_b), (t_f, h_f), GEOMETRY_TOL)?
    };
    Ok(geom)
}

/// Full geometry including `s0`, or `None` when the cap is never active.
pub fn compute_geometry(params: &EpidemicParams, opts: &SolverOptions) -> Result<Option<RegionGeometry>> {
    let Some(t_b) = hitting_time_tb(params, opts)? else {
        return Ok(None);
    };
    let x_b = free_trajectory(params, opts)?.x_at(t_b);
    let mut geom = geometry_from_entry(params, t_b, x_b)?;
    geom.s0 = Some(s0_point(params, opts, &geom)?);
    Ok(Some(geom))
}

/// x at the end of the budget-limited strict window starting at `t2`.
fn x_after_budget(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64) -> Result<f64> {
    let mu = budget_duration(params, geom, t2)?.min(params.horizon - t2).max(0.0);
    let traj = integrate(params, &geom.schedule(params, t2, mu)?, opts.step)?;
    Ok(traj.x_at(t2 + mu))
}

fn s0_point(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry) -> Result<f64> {
    let level = 1.0 / params.sigma_f;
    let g = |t: f64| Ok(x_after_budget(params, opts, geom, t)? - level);
    let at_b = g(geom.t_b)?;
    if at_b <= 0.0 {
        return Ok(geom.t_b);
    }
    let at_c = g(geom.t_c)?;
    if at_c > 0.0 {
        return Ok(geom.t_c);
    }
    bisect_values(g, (geom.t_b, at_b), (geom.t_c, at_c), opts.root_tol)
}

/// Path under the four-phase control with the longest admissible strict window.
fn border_trajectory(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64) -> Result<(Trajectory, f64)> {
    let mu = max_duration(params, geom, t2)?;
    Ok((integrate(params, &geom.schedule(params, t2, mu)?, opts.step)?, mu))
}

/// Integral of `(sigma_f x - 1) / y` over `[t2, t2 + G(t2)]` under the four-phase control.
pub fn w_b(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64) -> Result<f64> {
    let (traj, mu) = border_trajectory(params, opts, geom, t2)?;
    let sf = params.sigma_f;
    Ok(traj.quadrature(t2, t2 + mu, |_, x, y| (sf * x - 1.0) / y))
}

/// Final size along the upper border `mu = G(t2)`.
pub fn jtilde(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64) -> Result<f64> {
    let (traj, _) = border_trajectory(params, opts, geom, t2)?;
    terminal_x_inf(params, &traj)
}

/// Final size for an arbitrary four-phase control with hold on `[t_b, t2]`.
pub fn objective(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64, mu: f64) -> Result<f64> {
    let traj = integrate(params, &geom.schedule(params, t2, mu)?, opts.step)?;
    terminal_x_inf(params, &traj)
}

/// Derivative of the final size with respect to the strict duration.
pub fn dj_dmu(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64, mu: f64) -> Result<f64> {
    let traj = integrate(params, &geom.schedule(params, t2, mu)?, opts.step)?;
    let y3 = traj.y_at(t2 + mu);
    let end = traj.terminal();
    let xi = x_infinity(end.x, end.y, params.sigma_f)?.x_inf;
    Ok(params.gamma * y3 * (params.sigma_f - params.sigma_s) * xi / (1.0 - params.sigma_f * xi))
}

/// Derivative of [`jtilde`]; undefined at `t_c`.
pub fn jtilde_derivative(params: &EpidemicParams, opts: &SolverOptions, geom: &RegionGeometry, t2: f64) -> Result<f64> {
    if (t2 - geom.t_c).abs() <= 1e-12 && geom.t_c > geom.t_b && geom.t_c < geom.t_f {
        return Err(Error::Kink(t2));
    }
    let (traj, mu) = border_trajectory(params, opts, geom, t2)?;
    let sf = params.sigma_f;
    let wb = traj.quadrature(t2, t2 + mu, |_, x, y| (sf * x - 1.0) / y);
    let x2 = boundary_x(params, geom.x_b, geom.t_b, t2)?;
    let y3 = traj.y_at(t2 + mu);
    let end = traj.terminal();
    let xi = x_infinity(end.x, end.y, sf)?.x_inf;
    let gk = params.drain(params.cap);
    let prefactor = params.gamma * gk * y3 * (1.0 - params.sigma_s * x2) * xi / (x2 * (1.0 - sf * xi));
    let factor = if t2 < geom.t_c { wb } else { wb - 1.0 / gk };
    Ok(prefactor * factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub max_y: f64,
    pub cap_ok: bool,
    pub v_terminal: f64,
    pub budget: f64,
    pub budget_ok: bool,
    /// Range of the hold control, if there is a hold.
    pub arc_sigma: Option<(f64, f64)>,
    pub arc_ok: bool,
}

impl FeasibilityReport {
    pub fn evaluate(params: &EpidemicParams, traj: &Trajectory) -> Self {
        let (_, max_y) = traj.max_y();
        let v_terminal = traj.terminal().v;
        let budget = params.budget();
        let mut arc_sigma: Option<(f64, f64)> = None;
        for seg in traj.schedule().segments().iter().filter(|s| !s.is_empty()) {
            if let SegmentKind::BoundaryArc { .. } = seg.kind {
                let (a, b) = (seg.sigma(seg.t_start), seg.sigma(seg.t_end));
                let (lo, hi) = (a.min(b), a.max(b));
                arc_sigma = Some(arc_sigma.map_or((lo, hi), |(l, h)| (l.min(lo), h.max(hi))));
            }
        }
        let arc_ok = arc_sigma.is_none_or(|(lo, hi)| lo > params.sigma_s && hi <= params.sigma_f + 1e-9);
        FeasibilityReport {
            max_y,
            cap_ok: max_y <= params.cap + FEASIBILITY_TOL,
            v_terminal,
            budget,
            budget_ok: v_terminal >= budget - FEASIBILITY_TOL,
            arc_sigma,
            arc_ok,
        }
    }

    pub fn ok(&self) -> bool {
        self.cap_ok && self.budget_ok && self.arc_ok
    }
}

/// Assumptions the optimality argument makes but does not prove.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// x where the hold ends; must exceed 1/sigma_f.
    pub x_exit: Option<f64>,
    pub exit_ok: bool,
    pub y_terminal: f64,
    pub terminal_ok: bool,
}

impl HypothesisReport {
    pub fn ok(&self) -> bool {
        self.exit_ok && self.terminal_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedPolicy {
    pub t1: f64,
    pub t2: f64,
    pub mu: f64,
    pub case: CaseLabel,
    pub x_inf: f64,
    pub schedule: ControlSchedule,
    pub geometry: Option<RegionGeometry>,
    pub unconstrained: UnconstrainedPolicy,
    /// w_b(t_c), the value that selects among the constrained cases.
    pub w_b_at_tc: Option<f64>,
    pub feasibility: FeasibilityReport,
    pub hypotheses: HypothesisReport,
    /// All hypothesis and feasibility checks passed.
    pub verified: bool,
}

impl ConstrainedPolicy {
    pub fn trajectory(&self, params: &EpidemicParams, opts: &SolverOptions) -> Result<Trajectory> {
        integrate(params, &self.schedule, opts.step)
    }
}

pub fn solve_constrained(params: &EpidemicParams, opts: &SolverOptions) -> Result<ConstrainedPolicy> {
    params.validate()?;
    opts.validate()?;
    let unconstrained = solve_unconstrained(params, opts)?;
    let Some(t_b) = hitting_time_for(params, opts, &unconstrained)? else {
        let schedule = unconstrained.schedule(params)?;
        return finish(
            params,
            opts,
            unconstrained.t0,
            unconstrained.t0,
            unconstrained.mu0,
            CaseLabel::Unconstrained(unconstrained.case),
            schedule,
            None,
            unconstrained,
            None,
        );
    };
    let x_b = free_trajectory(params, opts)?.x_at(t_b);
    let geom = geometry_from_entry(params, t_b, x_b)?;
    // budget spent on the hold while x > 1/sigma_f: y must exceed K afterwards
    if geom.t_f < geom.t_m - GEOMETRY_TOL {
        return Err(Error::Infeasible(format!(
            "budget exhausted on the hold at t = {:.6} before x reaches 1/sigma_f (t = {:.6})",
            geom.t_f, geom.t_m
        )));
    }
    let wb = |t: f64| w_b(params, opts, &geom, t);
    let threshold = 1.0 / params.drain(params.cap);
    let w_c = wb(geom.t_c)?;

    let (t2, case) = if w_c <= GUARD {
        let t2 = if geom.t_c - geom.t_b <= opts.root_tol {
            geom.t_b
        } else if w_c >= 0.0 {
            geom.t_c
        } else {
            first_root(&wb, geom.t_b, geom.t_c, opts.root_tol)?
        };
        (t2, CaseLabel::Interior)
    } else if w_c <= threshold + GUARD {
        (geom.t_c, CaseLabel::Crossover)
    } else {
        let shifted = |t: f64| Ok(wb(t)? - threshold);
        (first_root(&shifted, geom.t_c, geom.t_f, opts.root_tol)?, CaseLabel::RunsToHorizon)
    };
    let mu = max_duration(params, &geom, t2)?;
    let schedule = geom.schedule(params, t2, mu)?;
    finish(params, opts, t_b, t2, mu, case, schedule, Some(geom), unconstrained, Some(w_c))
}

/// Scan for the first sign change of `f` on `[lo, hi]` and bisect it.
fn first_root(f: &impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    match scan_bracket(f, lo, hi, SCAN_POINTS)? {
        Some(((a, fa), (b, fb))) => bisect_values(f, (a, fa), (b, fb), tol),
        None => bisect(f, lo, hi, tol),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    params: &EpidemicParams,
    opts: &SolverOptions,
    t1: f64,
    t2: f64,
    mu: f64,
    case: CaseLabel,
    schedule: ControlSchedule,
    geometry: Option<RegionGeometry>,
    unconstrained: UnconstrainedPolicy,
    w_b_at_tc: Option<f64>,
) -> Result<ConstrainedPolicy> {
    let traj = integrate(params, &schedule, opts.step)?;
    let x_inf = terminal_x_inf(params, &traj)?;
    let feasibility = FeasibilityReport::evaluate(params, &traj);
    let x_exit = geometry.map(|_| traj.x_at(t2));
    let y_terminal = traj.terminal().y;
    let hypotheses = HypothesisReport {
        x_exit,
        exit_ok: x_exit.is_none_or(|x| x > 1.0 / params.sigma_f),
        y_terminal,
        terminal_ok: y_terminal < params.cap,
    };
    Ok(ConstrainedPolicy {
        t1,
        t2,
        mu,
        case,
        x_inf,
        schedule,
        geometry,
        unconstrained,
        w_b_at_tc,
        verified: feasibility.ok() && hypotheses.ok(),
        feasibility,
        hypotheses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn geometry(cap: f64, tau: f64) -> (EpidemicParams, RegionGeometry) {
        let p = EpidemicParams::reference(cap, tau);
        let g = compute_geometry(&p, &opts()).unwrap().unwrap();
        (p, g)
    }

    #[test]
    fn f_starts_at_tau() {
        let (p, g) = geometry(0.03, 40.0);
        assert!((budget_duration(&p, &g, g.t_b).unwrap() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn f_past_tm_is_overrun() {
        let (p, g) = geometry(0.03, 40.0);
        assert!(g.t_m < p.horizon);
        assert!(matches!(budget_duration(&p, &g, g.t_m + 1.0), Err(Error::ArcOverrun { .. })));
    }

    #[test]
    fn reference_geometry() {
        let (p, g) = geometry(0.03, 40.0);
        assert!((g.t_b - 212.93).abs() < 0.01, "t_b = {}", g.t_b);
        assert!((g.t_m - 290.4).abs() < 0.05, "t_m = {}", g.t_m);
        assert!(p.sigma_f * g.x_b > 1.0);
        assert!(g.t_b < g.t_m && g.t_f <= g.t_m && g.t_b <= g.t_c && g.t_c <= g.t_f);
    }

    #[test]
    fn g_is_continuous_at_tc() {
        let (p, g) = geometry(0.03, 110.0);
        assert!(g.t_c > g.t_b && g.t_c < g.t_f);
        let f = budget_duration(&p, &g, g.t_c).unwrap();
        assert!((f - (p.horizon - g.t_c)).abs() <= 1e-6);
        assert!((max_duration(&p, &g, g.t_b).unwrap() - 110.0).abs() < 1e-12);
    }

    #[test]
    fn inactive_cap_passes_through() {
        let p = EpidemicParams::reference(1.0, 80.0);
        assert_eq!(hitting_time_tb(&p, &opts()).unwrap(), None);
        let pol = solve_constrained(&p, &opts()).unwrap();
        assert!(!pol.case.is_constrained());
        assert_eq!(pol.t1, pol.t2);
        assert_eq!(pol.t2, pol.unconstrained.t0);
    }

    #[test]
    fn jtilde_kink_is_reported() {
        let (p, g) = geometry(0.03, 110.0);
        assert!(matches!(jtilde_derivative(&p, &opts(), &g, g.t_c), Err(Error::Kink(_))));
    }

    #[test]
    fn labels_round_trip() {
        for s in ["1.1", "1.2", "1.3", "1.4", "2.1", "2.2", "2.3"] {
            assert_eq!(s.parse::<CaseLabel>().unwrap().to_string(), s);
        }
        assert!("3.1".parse::<CaseLabel>().is_err());
    }
}
