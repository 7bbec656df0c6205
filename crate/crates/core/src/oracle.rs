//! Brute-force maximization of the final size over admissible schedules.
//!
//! Every lattice point is integrated forward and checked for feasibility
//! directly; nothing from the semi-analytic solvers is used beyond the time
//! at which the free path first reaches the cap.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, integrate_summary, ControlSchedule, EventKind, State};
use crate::error::{Error, Result};
use crate::final_size::x_infinity;
use crate::params::{EpidemicParams, SolverOptions};

/// Slack on the cap when classifying lattice points.
pub const CAP_TOL: f64 = 1e-7;
/// Slack on the integral budget when classifying lattice points.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T1Mode {
    /// Hold starts where the free path first reaches the cap; `t2` before that is a plain window.
    FixedAtTb,
    /// Hold starts at the given time and keeps y at its value there.
    At(OrderedTime),
}

/// A time stored as bits so the mode can derive `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedTime(u64);

impl OrderedTime {
    pub fn new(t: f64) -> Self {
        OrderedTime(t.to_bits())
    }

    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Coarse lattice size `(t2 points, mu points)`.
    pub resolution: (usize, usize),
    /// Number of 10x zooms around the running argmax.
    pub refinements: usize,
    /// Lattice size used at each zoom level.
    pub refine_resolution: (usize, usize),
    pub t1_mode: T1Mode,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            resolution: (100, 100),
            refinements: 2,
            refine_resolution: (100, 100),
            t1_mode: T1Mode::FixedAtTb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub t2: f64,
    pub mu: f64,
    /// NaN when the window does not fit in `[0, T]` or the hold is inadmissible.
    pub x_inf: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeLevel {
    pub t2_range: (f64, f64),
    pub mu_range: (f64, f64),
    pub t2_spacing: f64,
    pub mu_spacing: f64,
    pub best: SurfacePoint,
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: SurfacePoint,
    /// Start of the hold, if any hold was searched.
    pub t1: Option<f64>,
    pub levels: Vec<LatticeLevel>,
    /// Coarse lattice in row-major order (t2 outer, mu inner).
    pub surface: Vec<SurfacePoint>,
    pub evaluations: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl OracleResult {
    /// Spacing of the finest lattice.
    pub fn spacing(&self) -> (f64, f64) {
        self.levels.last().map_or((f64::NAN, f64::NAN), |l| (l.t2_spacing, l.mu_spacing))
    }
}

/// Hold parameters shared by every lattice point of a search.
#[derive(Debug, Clone, Copy)]
struct Hold {
    t1: f64,
    x1: f64,
    level: f64,
}

struct Search<'a> {
    params: &'a EpidemicParams,
    step: f64,
    hold: Option<Hold>,
}

impl Search<'_> {
    fn schedule(&self, t2: f64, mu: f64) -> Result<ControlSchedule> {
        match self.hold {
            Some(h) if t2 >= h.t1 => ControlSchedule::with_hold(self.params, h.t1, h.x1, h.level, t2, mu),
            _ => ControlSchedule::strict_window(self.params, t2, mu),
        }
    }

    /// Hold control at `t2` exceeds sigma_f.
    fn hold_inadmissible(&self, t2: f64) -> bool {
        match self.hold {
            Some(h) if t2 >= h.t1 => {
                let x2 = h.x1 - self.params.drain(h.level) * (t2 - h.t1);
                !(x2 * self.params.sigma_f >= 1.0)
            }
            _ => false,
        }
    }

    /// Evaluates one column of the lattice, reusing the path up to `t2`.
    fn column(&self, t2: f64, mus: &[f64]) -> Result<Vec<SurfacePoint>> {
        let p = self.params;
        let infeasible = |mu: f64| SurfacePoint { t2, mu, x_inf: f64::NAN, feasible: false };
        if self.hold_inadmissible(t2) {
            return Ok(mus.iter().map(|&mu| infeasible(mu)).collect());
        }
        let start: State = [p.x0, p.y0, 0.0];
        let prefix_schedule = self.schedule(t2, 0.0)?;
        let prefix = integrate_summary(p, &prefix_schedule, 0.0, start, t2, self.step)?;
        let budget = p.budget();
        mus.iter()
            .map(|&mu| {
                if t2 + mu > p.horizon + 1e-12 {
                    return Ok(infeasible(mu));
                }
                let schedule = self.schedule(t2, mu)?;
                let tail = integrate_summary(p, &schedule, t2, prefix.state, p.horizon, self.step)?;
                let [x, y, v] = tail.state;
                let max_y = prefix.max_y.max(tail.max_y);
                let x_inf = x_infinity(x, y, p.sigma_f)?.x_inf;
                let feasible = max_y <= p.cap + CAP_TOL && v >= budget - BUDGET_TOL;
                Ok(SurfacePoint { t2, mu, x_inf, feasible })
            })
            .collect()
    }

    fn lattice(&self, t2s: &[f64], mus: &[f64]) -> Result<Vec<SurfacePoint>> {
        let columns: Vec<Result<Vec<SurfacePoint>>> = t2s.par_iter().map(|&t2| self.column(t2, mus)).collect();
        let mut out = Vec::with_capacity(t2s.len() * mus.len());
        for c in columns {
            out.extend(c?);
        }
        Ok(out)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect()
}

/// Feasible point with the largest final size; ties keep the earliest index.
fn argmax(points: &[SurfacePoint]) -> Option<SurfacePoint> {
    let mut best: Option<SurfacePoint> = None;
    for p in points.iter().filter(|p| p.feasible) {
        if best.is_none_or(|b| p.x_inf > b.x_inf) {
            best = Some(*p);
        }
    }
    best
}

/// Window of one tenth the width of `range`, centred on `c` and kept inside `domain`.
fn zoom(range: (f64, f64), c: f64, domain: (f64, f64)) -> (f64, f64) {
    let half = (range.1 - range.0) / 20.0;
    let mut lo = c - half;
    let mut hi = c + half;
    if lo < domain.0 {
        hi += domain.0 - lo;
        lo = domain.0;
    }
    if hi > domain.1 {
        lo -= hi - domain.1;
        hi = domain.1;
    }
    (lo.max(domain.0), hi.min(domain.1))
}

fn free_hit(params: &EpidemicParams, opts: &SolverOptions) -> Result<Option<Hold>> {
    let free = integrate(params, &ControlSchedule::constant(params.horizon, params.sigma_f)?, opts.step)?;
    Ok(free
        .locate(EventKind::YRisesTo(params.cap), (0.0, params.horizon), opts.event_tol)
        .map(|t1| Hold { t1, x1: free.x_at(t1), level: params.cap }))
}

/// Lattice search over `(t2, mu)` with zoom refinements.
pub fn grid_search(params: &EpidemicParams, opts: &SolverOptions, config: &OracleConfig) -> Result<OracleResult> {
    params.validate()?;
    opts.validate()?;
    let (n_t2, n_mu) = config.resolution;
    if n_t2 < 2 || n_mu < 2 || config.refine_resolution.0 < 2 || config.refine_resolution.1 < 2 {
        return Err(Error::InvalidParams("oracle lattices need at least 2 points per axis".into()));
    }
    let started = Instant::now();
    let hold = match config.t1_mode {
        T1Mode::FixedAtTb => free_hit(params, opts)?,
        T1Mode::At(t1) => {
            let t1 = t1.get();
            let free = integrate(params, &ControlSchedule::constant(params.horizon, params.sigma_f)?, opts.step)?;
            let [x1, y1, _] = free.state_at(t1);
            Some(Hold { t1, x1, level: y1 })
        }
    };
    let search = Search { params, step: opts.step, hold };
    let t2_domain = (0.0, params.horizon);
    let mu_domain = (0.0, params.tau);

    let mut t2_range = t2_domain;
    let mut mu_range = mu_domain;
    let mut levels = Vec::new();
    let mut surface = Vec::new();
    let mut evaluations = 0;
    let mut best: Option<SurfacePoint> = None;
    for level in 0..=config.refinements {
        let (nt, nm) = if level == 0 { config.resolution } else { config.refine_resolution };
        let t2s = linspace(t2_range.0, t2_range.1, nt);
        let mus = linspace(mu_range.0, mu_range.1, nm);
        let points = search.lattice(&t2s, &mus)?;
        evaluations += points.len();
        let infeasible = points.iter().filter(|p| !p.feasible).count();
        let Some(level_best) = argmax(&points) else {
            if level == 0 {
                return Err(Error::Infeasible(format!(
                    "no feasible point on the {nt}x{nm} lattice with cap {} and tau {}",
                    params.cap, params.tau
                )));
            }
            break;
        };
        // zoom windows can only improve on the previous level
        if best.is_none_or(|b| level_best.x_inf >= b.x_inf) {
            best = Some(level_best);
        }
        levels.push(LatticeLevel {
            t2_range,
            mu_range,
            t2_spacing: (t2_range.1 - t2_range.0) / (nt - 1) as f64,
            mu_spacing: (mu_range.1 - mu_range.0) / (nm - 1) as f64,
            best: level_best,
            infeasible,
        });
        if level == 0 {
            surface = points;
        }
        let centre = best.expect("set above");
        t2_range = zoom(t2_range, centre.t2, t2_domain);
        mu_range = zoom(mu_range, centre.mu, mu_domain);
    }
    Ok(OracleResult {
        best: best.expect("level 0 has a feasible point"),
        t1: hold.map(|h| h.t1),
        levels,
        surface,
        evaluations,
        elapsed: started.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1ProfilePoint {
    pub t1: f64,
    /// Best final size over the inner lattice, NaN if nothing is feasible.
    pub x_inf: f64,
    pub t2: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Sweep {
    /// Free hitting time of the cap.
    pub t_b: f64,
    pub best_t1: f64,
    pub profile: Vec<T1ProfilePoint>,
}

/// Searches the hold start over `t1_values`; the hold keeps y at `y(t1)`.
pub fn sweep_t1(
    params: &EpidemicParams,
    opts: &SolverOptions,
    t1_values: &[f64],
    inner: &OracleConfig,
) -> Result<T1Sweep> {
    let t_b = free_hit(params, opts)?
        .ok_or_else(|| Error::Infeasible("the free path never reaches the cap".into()))?
        .t1;
    let mut profile = Vec::with_capacity(t1_values.len());
    for &t1 in t1_values {
        let config = OracleConfig { t1_mode: T1Mode::At(OrderedTime::new(t1)), ..*inner };
        let point = match grid_search(params, opts, &config) {
            Ok(r) => T1ProfilePoint { t1, x_inf: r.best.x_inf, t2: r.best.t2, mu: r.best.mu },
            Err(Error::Infeasible(_)) => T1ProfilePoint { t1, x_inf: f64::NAN, t2: f64::NAN, mu: f64::NAN },
            Err(e) => return Err(e),
        };
        profile.push(point);
    }
    let best_t1 = profile
        .iter()
        .filter(|p| !p.x_inf.is_nan())
        .fold(None::<T1ProfilePoint>, |b, p| if b.is_none_or(|b| p.x_inf > b.x_inf) { Some(*p) } else { b })
        .map_or(f64::NAN, |p| p.t1);
    Ok(T1Sweep { t_b, best_t1, profile })
}

/// Central difference `(f(p + h) - f(p - h)) / 2h`.
pub fn finite_diff(mut f: impl FnMut(f64) -> Result<f64>, point: f64, h: f64) -> Result<f64> {
    Ok((f(point + h)? - f(point - h)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_square() {
        let d = finite_diff(|x| Ok(x * x), 3.0, 1e-5).unwrap();
        assert!((d - 6.0).abs() < 1e-9);
    }

    #[test]
    fn errors_propagate() {
        let r = finite_diff(|_| Err(Error::Numerical("boom".into())), 0.0, 1.0);
        assert!(r.is_err());
    }

    #[test]
    fn zoom_stays_in_domain() {
        assert_eq!(zoom((0.0, 100.0), 1.0, (0.0, 100.0)), (0.0, 10.0));
        assert_eq!(zoom((0.0, 100.0), 99.0, (0.0, 100.0)), (90.0, 100.0));
        let (a, b) = zoom((0.0, 100.0), 50.0, (0.0, 100.0));
        assert!((a - 45.0).abs() < 1e-12 && (b - 55.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let pts = [
            SurfacePoint { t2: 0.0, mu: 0.0, x_inf: 0.5, feasible: true },
            SurfacePoint { t2: 1.0, mu: 0.0, x_inf: 0.5, feasible: true },
            SurfacePoint { t2: 2.0, mu: 0.0, x_inf: 0.9, feasible: false },
        ];
        assert_eq!(argmax(&pts).unwrap().t2, 0.0);
    }

    #[test]
    fn impossible_cap_is_infeasible() {
        // y0 sits just below a cap that the epidemic must exceed under any control
        let p = EpidemicParams { cap: 2e-6, ..EpidemicParams::reference(0.03, 40.0) };
        let config = OracleConfig { resolution: (10, 10), refinements: 0, ..Default::default() };
        let r = grid_search(&p, &SolverOptions::with_step(0.5), &config);
        assert!(matches!(r, Err(Error::Infeasible(_))), "{r:?}");
    }
}
