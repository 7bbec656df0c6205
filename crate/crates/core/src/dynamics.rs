//! Piecewise controls, fixed-step RK4 integration of the controlled SIR
//! system, dense output and state-event localization.
//!
//! State vector is `[x, y, v]`: susceptible fraction, infected fraction and
//! the running integral of the control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::EpidemicParams;

/// Values in `[-CLAMP_BAND, 0)` are treated as rounding noise and set to zero.
const CLAMP_BAND: f64 = 1e-12;
/// Allowed excursion of x or y outside `[0, 1]` before integration fails.
const STATE_TOL: f64 = 1e-9;
/// Tolerance used when checking that schedule segments abut.
const JOINT_TOL: f64 = 1e-9;

pub type State = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Constant { sigma: f64 },
    /// Holds y constant: sigma(t) = 1 / (x_entry - drain * (t - t_entry)),
    /// where `drain` is gamma times the held infected level.
    BoundaryArc { x_entry: f64, t_entry: f64, drain: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    pub kind: SegmentKind,
    pub t_start: f64,
    pub t_end: f64,
}

impl ControlSegment {
    pub fn constant(sigma: f64, t_start: f64, t_end: f64) -> Self {
        ControlSegment { kind: SegmentKind::Constant { sigma }, t_start, t_end }
    }

    pub fn arc(x_entry: f64, t_entry: f64, drain: f64, t_end: f64) -> Self {
        ControlSegment {
            kind: SegmentKind::BoundaryArc { x_entry, t_entry, drain },
            t_start: t_entry,
            t_end,
        }
    }

    #[inline]
    pub fn sigma(&self, t: f64) -> f64 {
        match self.kind {
            SegmentKind::Constant { sigma } => sigma,
            SegmentKind::BoundaryArc { x_entry, t_entry, drain } => 1.0 / (x_entry - drain * (t - t_entry)),
        }
    }

    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.t_end <= self.t_start
    }

    pub fn is_arc(&self) -> bool {
        matches!(self.kind, SegmentKind::BoundaryArc { .. })
    }

    /// Exact integral of sigma over the segment.
    pub fn integral(&self) -> f64 {
        match self.kind {
            SegmentKind::Constant { sigma } => sigma * self.len(),
            SegmentKind::BoundaryArc { x_entry, t_entry, drain } => {
                let a = x_entry - drain * (self.t_start - t_entry);
                let b = x_entry - drain * (self.t_end - t_entry);
                if drain == 0.0 {
                    self.len() / x_entry
                } else {
                    (a / b).ln() / drain
                }
            }
        }
    }
}

/// Ordered, gap-free list of segments covering `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    segments: Vec<ControlSegment>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<ControlSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Schedule("no segments".into()));
        }
        if segments[0].t_start.abs() > JOINT_TOL {
            return Err(Error::Schedule(format!("first segment starts at {}", segments[0].t_start)));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.t_start.is_finite() && s.t_end.is_finite()) || s.t_end < s.t_start {
                return Err(Error::Schedule(format!(
                    "segment {i} has invalid interval [{}, {}]",
                    s.t_start, s.t_end
                )));
            }
            if let Some(next) = segments.get(i + 1) {
                let gap = next.t_start - s.t_end;
                if gap > JOINT_TOL {
                    return Err(Error::Schedule(format!("gap of {gap} after segment {i}")));
                }
                if gap < -JOINT_TOL {
                    return Err(Error::Schedule(format!("overlap of {} after segment {i}", -gap)));
                }
            }
            if let SegmentKind::BoundaryArc { x_entry, t_entry, drain } = s.kind {
                let x_end = x_entry - drain * (s.t_end - t_entry);
                if !(x_end > 0.0) {
                    return Err(Error::ArcOverrun { t: s.t_end, x: x_end });
                }
            }
        }
        if segments.iter().all(|s| s.is_empty()) {
            return Err(Error::Schedule("schedule has zero length".into()));
        }
        Ok(ControlSchedule { segments })
    }

    /// sigma constant on `[0, horizon]`.
    pub fn constant(horizon: f64, sigma: f64) -> Result<Self> {
        Self::new(vec![ControlSegment::constant(sigma, 0.0, horizon)])
    }

    /// Free until `t`, strict quarantine on `(t, t + mu]`, free until T.
    pub fn strict_window(params: &EpidemicParams, t: f64, mu: f64) -> Result<Self> {
        let horizon = params.horizon;
        let (t, end) = clamp_window(t, mu, horizon)?;
        Self::new(
            [
                ControlSegment::constant(params.sigma_f, 0.0, t),
                ControlSegment::constant(params.sigma_s, t, end),
                ControlSegment::constant(params.sigma_f, end, horizon),
            ]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect(),
        )
    }

    /// Four-phase control: free until `t1`, hold y at `level` until `t2`,
    /// strict quarantine for `mu`, then free until T.
    pub fn with_hold(
        params: &EpidemicParams,
        t1: f64,
        x_entry: f64,
        level: f64,
        t2: f64,
        mu: f64,
    ) -> Result<Self> {
        if t2 < t1 - JOINT_TOL {
            return Err(Error::Schedule(format!("hold ends at {t2} before it starts at {t1}")));
        }
        let horizon = params.horizon;
        let t1 = t1.max(0.0);
        let (t2, end) = clamp_window(t2.max(t1), mu, horizon)?;
        Self::new(
            [
                ControlSegment::constant(params.sigma_f, 0.0, t1),
                ControlSegment::arc(x_entry, t1, params.drain(level), t2),
                ControlSegment::constant(params.sigma_s, t2, end),
                ControlSegment::constant(params.sigma_f, end, horizon),
            ]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect(),
        )
    }

    pub fn segments(&self) -> &[ControlSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map(|s| s.t_end).unwrap_or(0.0)
    }

    /// Index of the segment in force at `t`; junctions belong to the right segment.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::Domain { t, horizon });
        }
        let mut found = None;
        for (i, s) in self.segments.iter().enumerate() {
            if s.is_empty() {
                continue;
            }
            if s.t_start <= t && t < s.t_end {
                return Ok(i);
            }
            found = Some(i);
        }
        found.ok_or_else(|| Error::Schedule("schedule has zero length".into()))
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let i = self.segment_index(t)?;
        Ok(self.segments[i].sigma(t))
    }

    /// Exact value of v(T).
    pub fn integral(&self) -> f64 {
        self.segments.iter().map(ControlSegment::integral).sum()
    }

    /// Checks that every constant segment uses one of the two extreme values
    /// and that hold controls stay strictly between them.
    pub fn check_admissible(&self, params: &EpidemicParams) -> Result<()> {
        for s in self.segments.iter().filter(|s| !s.is_empty()) {
            match s.kind {
                SegmentKind::Constant { sigma } => {
                    if sigma != params.sigma_s && sigma != params.sigma_f {
                        return Err(Error::Schedule(format!("constant segment uses sigma = {sigma}")));
                    }
                }
                SegmentKind::BoundaryArc { .. } => {
                    for t in [s.t_start, s.t_end] {
                        let sigma = s.sigma(t);
                        if !(sigma > params.sigma_s && sigma < params.sigma_f + 1e-12) {
                            return Err(Error::Schedule(format!(
                                "hold control {sigma} at t = {t} leaves ({}, {})",
                                params.sigma_s, params.sigma_f
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn clamp_window(t: f64, mu: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(t >= -JOINT_TOL && mu >= -JOINT_TOL && t + mu <= horizon + JOINT_TOL) {
        return Err(Error::Schedule(format!(
            "window start {t} with duration {mu} does not fit in [0, {horizon}]"
        )));
    }
    let t = t.clamp(0.0, horizon);
    Ok((t, (t + mu.max(0.0)).min(horizon)))
}

/// x on a hold arc entered at `(t_entry, x_entry)` with y held at the cap.
pub fn boundary_x(params: &EpidemicParams, x_entry: f64, t_entry: f64, t: f64) -> Result<f64> {
    if t < t_entry {
        return Err(Error::Domain { t, horizon: params.horizon });
    }
    let x = x_entry - params.drain(params.cap) * (t - t_entry);
    if x <= 0.0 {
        return Err(Error::ArcOverrun { t, x });
    }
    Ok(x)
}

#[inline]
fn rhs(gamma: f64, sigma: f64, s: &State) -> State {
    let infection = gamma * sigma * s[0] * s[1];
    [-infection, infection - gamma * s[1], sigma]
}

fn clamp_state(t: f64, s: &mut State) -> Result<()> {
    for (k, name) in [(0usize, "x"), (1, "y")] {
        let v = s[k];
        if !v.is_finite() || !(-STATE_TOL..=1.0 + STATE_TOL).contains(&v) {
            return Err(Error::Numerical(format!("{name} = {v} left [0, 1] at t = {t}")));
        }
        if (-CLAMP_BAND..0.0).contains(&v) {
            s[k] = 0.0;
        }
    }
    Ok(())
}

/// One integration step with the derivative at both ends, as produced by [`march`].
struct Step {
    t0: f64,
    d0: State,
    t1: f64,
    s1: State,
    d1: State,
    segment: usize,
}

/// Fixed-step RK4 from `(t_start, start)` to `t_end`. Segment boundaries are
/// always mesh points; inside a segment of length L the step is L / ceil(L / h).
fn march(
    params: &EpidemicParams,
    schedule: &ControlSchedule,
    t_start: f64,
    start: State,
    t_end: f64,
    step: f64,
    mut visit: impl FnMut(Step),
) -> Result<State> {
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("step must be positive, got {step}")));
    }
    let gamma = params.gamma;
    let mut s = start;
    for (idx, seg) in schedule.segments().iter().enumerate() {
        let a = seg.t_start.max(t_start);
        let b = seg.t_end.min(t_end);
        if !(b > a) {
            continue;
        }
        let n = ((b - a) / step - 1e-9).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        let mut t = a;
        let mut k1 = rhs(gamma, seg.sigma(t), &s);
        for i in 0..n {
            let t_next = if i + 1 == n { b } else { a + (i + 1) as f64 * dt };
            let h = t_next - t;
            let half = t + 0.5 * h;
            let sig_half = seg.sigma(half);
            let k2 = rhs(gamma, sig_half, &axpy(&s, 0.5 * h, &k1));
            let k3 = rhs(gamma, sig_half, &axpy(&s, 0.5 * h, &k2));
            let k4 = rhs(gamma, seg.sigma(t_next), &axpy(&s, h, &k3));
            let mut next = [0.0; 3];
            for j in 0..3 {
                next[j] = s[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            clamp_state(t_next, &mut next)?;
            let d1 = rhs(gamma, seg.sigma(t_next), &next);
            visit(Step { t0: t, d0: k1, t1: t_next, s1: next, d1, segment: idx });
            s = next;
            k1 = d1;
            t = t_next;
        }
    }
    Ok(s)
}

#[inline]
fn axpy(s: &State, h: f64, k: &State) -> State {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventLabel {
    BoundaryHit,
    BoundaryExit,
    HerdCrossing,
    YPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: EventLabel,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// First upward crossing of y through the given level.
    YRisesTo(f64),
    /// x crossing the given level in either direction.
    XCrosses(f64),
    /// y' changing sign from positive to non-positive.
    YPeak,
}

/// Sampled path with cubic Hermite dense output between mesh points.
#[derive(Debug, Clone)]
pub struct Trajectory {
    samples: Vec<Sample>,
    /// Derivatives at the two ends of each interval, taken with that interval's control.
    slopes: Vec<[State; 2]>,
    segment_of: Vec<usize>,
    schedule: ControlSchedule,
    events: Vec<Event>,
}

/// Integrates the controlled system over `[0, T]`.
pub fn integrate(params: &EpidemicParams, schedule: &ControlSchedule, step: f64) -> Result<Trajectory> {
    let horizon = schedule.horizon();
    if (horizon - params.horizon).abs() > JOINT_TOL {
        return Err(Error::Schedule(format!(
            "schedule covers [0, {horizon}] but the horizon is {}",
            params.horizon
        )));
    }
    let n_est = (horizon / step) as usize + schedule.segments().len() + 2;
    let mut samples = Vec::with_capacity(n_est);
    let mut slopes = Vec::with_capacity(n_est);
    let mut segment_of = Vec::with_capacity(n_est);
    let start = [params.x0, params.y0, 0.0];
    samples.push(Sample { t: 0.0, x: start[0], y: start[1], v: 0.0, sigma: 0.0 });
    march(params, schedule, 0.0, start, horizon, step, |st| {
        let seg = &schedule.segments()[st.segment];
        if let Some(last) = samples.last_mut() {
            last.sigma = seg.sigma(st.t0);
        }
        samples.push(Sample { t: st.t1, x: st.s1[0], y: st.s1[1], v: st.s1[2], sigma: seg.sigma(st.t1) });
        slopes.push([st.d0, st.d1]);
        segment_of.push(st.segment);
    })?;
    let mut traj = Trajectory { samples, slopes, segment_of, schedule: schedule.clone(), events: Vec::new() };
    traj.events = traj.annotate(params);
    Ok(traj)
}

/// Terminal state and running maximum of y for a partial integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub state: State,
    pub max_y: f64,
}

/// Integrates from `(t_start, start)` to `t_end` without storing samples.
pub fn integrate_summary(
    params: &EpidemicParams,
    schedule: &ControlSchedule,
    t_start: f64,
    start: State,
    t_end: f64,
    step: f64,
) -> Result<PathSummary> {
    let mut max_y = start[1];
    let state = march(params, schedule, t_start, start, t_end, step, |st| {
        if st.s1[1] > max_y {
            max_y = st.s1[1];
        }
    })?;
    Ok(PathSummary { state, max_y })
}

/// Integrates and localizes an event inside `bracket`.
pub fn locate_event(
    params: &EpidemicParams,
    schedule: &ControlSchedule,
    kind: EventKind,
    bracket: (f64, f64),
    step: f64,
    tol: f64,
) -> Result<Option<f64>> {
    Ok(integrate(params, schedule, step)?.locate(kind, bracket, tol))
}

impl Trajectory {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn schedule(&self) -> &ControlSchedule {
        &self.schedule
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    pub fn terminal(&self) -> Sample {
        *self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn interval_count(&self) -> usize {
        self.slopes.len()
    }

    /// Endpoints and segment of interval `i`.
    pub fn interval(&self, i: usize) -> (f64, f64, &ControlSegment) {
        (self.samples[i].t, self.samples[i + 1].t, &self.schedule.segments()[self.segment_of[i]])
    }

    fn interval_index(&self, t: f64) -> usize {
        let n = self.slopes.len();
        let k = self.samples.partition_point(|s| s.t <= t);
        k.saturating_sub(1).min(n.saturating_sub(1))
    }

    /// Dense state on interval `i` (which must contain `t`).
    pub fn state_in(&self, i: usize, t: f64) -> State {
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let h = b.t - a.t;
        let s = ((t - a.t) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let [m0, m1] = &self.slopes[i];
        let p0 = [a.x, a.y, a.v];
        let p1 = [b.x, b.y, b.v];
        let mut out = [0.0; 3];
        for j in 0..3 {
            out[j] = h00 * p0[j] + h10 * h * m0[j] + h01 * p1[j] + h11 * h * m1[j];
        }
        out
    }

    /// Time derivative of the dense output on interval `i`.
    pub fn slope_in(&self, i: usize, t: f64) -> State {
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let h = b.t - a.t;
        let s = ((t - a.t) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let [m0, m1] = &self.slopes[i];
        let p0 = [a.x, a.y, a.v];
        let p1 = [b.x, b.y, b.v];
        let mut out = [0.0; 3];
        for j in 0..3 {
            out[j] = d00 * p0[j] + d10 * m0[j] + d01 * p1[j] + d11 * m1[j];
        }
        out
    }

    /// Dense `[x, y, v]` at `t`, clamped to the integrated range.
    pub fn state_at(&self, t: f64) -> State {
        if self.slopes.is_empty() {
            let s = &self.samples[0];
            return [s.x, s.y, s.v];
        }
        let i = self.interval_index(t);
        self.state_in(i, t)
    }

    pub fn x_at(&self, t: f64) -> f64 {
        self.state_at(t)[0]
    }

    pub fn y_at(&self, t: f64) -> f64 {
        self.state_at(t)[1]
    }

    /// Largest sampled y and the time it occurs (first one on ties).
    pub fn max_y(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((0.0, f64::NEG_INFINITY), |(tb, yb), s| if s.y > yb { (s.t, s.y) } else { (tb, yb) })
    }

    /// Composite Simpson quadrature of `g(t, x, y)` over `[a, b]`, one panel per
    /// mesh interval with the midpoint taken from the dense output.
    pub fn quadrature(&self, a: f64, b: f64, mut g: impl FnMut(f64, f64, f64) -> f64) -> f64 {
        if !(b > a) || self.slopes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        let mut i = self.interval_index(a);
        while i < self.slopes.len() {
            let lo = self.samples[i].t.max(a);
            let hi = self.samples[i + 1].t.min(b);
            if hi > lo {
                let mid = 0.5 * (lo + hi);
                let fa = self.state_in(i, lo);
                let fm = self.state_in(i, mid);
                let fb = self.state_in(i, hi);
                total += (hi - lo) / 6.0 * (g(lo, fa[0], fa[1]) + 4.0 * g(mid, fm[0], fm[1]) + g(hi, fb[0], fb[1]));
            }
            if self.samples[i + 1].t >= b {
                break;
            }
            i += 1;
        }
        total
    }

    /// Localizes an event inside `bracket` by bisection on the dense output.
    /// Returns `None` when the event does not occur in the bracket.
    pub fn locate(&self, kind: EventKind, bracket: (f64, f64), tol: f64) -> Option<f64> {
        if self.slopes.is_empty() {
            return None;
        }
        let lo = bracket.0.max(self.samples[0].t);
        let hi = bracket.1.min(self.t_end());
        if !(hi > lo) {
            return None;
        }
        let first = self.interval_index(lo);
        let mut prev_right_slope: Option<f64> = None;
        for i in first..self.slopes.len() {
            let a = self.samples[i].t.max(lo);
            let b = self.samples[i + 1].t.min(hi);
            if b < a {
                break;
            }
            match kind {
                EventKind::YRisesTo(level) => {
                    let ga = self.state_in(i, a)[1] - level;
                    let gb = self.state_in(i, b)[1] - level;
                    if ga < 0.0 && gb >= 0.0 {
                        return Some(bisect_in(a, b, tol, |t| self.state_in(i, t)[1] - level < 0.0));
                    }
                }
                EventKind::XCrosses(level) => {
                    let ga = self.state_in(i, a)[0] - level;
                    let gb = self.state_in(i, b)[0] - level;
                    if ga == 0.0 {
                        return Some(a);
                    }
                    if ga > 0.0 && gb <= 0.0 {
                        return Some(bisect_in(a, b, tol, |t| self.state_in(i, t)[0] - level > 0.0));
                    }
                    if ga < 0.0 && gb >= 0.0 {
                        return Some(bisect_in(a, b, tol, |t| self.state_in(i, t)[0] - level < 0.0));
                    }
                }
                EventKind::YPeak => {
                    let da = self.slope_in(i, a)[1];
                    let db = self.slope_in(i, b)[1];
                    if let Some(prev) = prev_right_slope {
                        if prev > 0.0 && da <= 0.0 {
                            return Some(a);
                        }
                    }
                    if da > 0.0 && db <= 0.0 {
                        return Some(bisect_in(a, b, tol, |t| self.slope_in(i, t)[1] > 0.0));
                    }
                    prev_right_slope = Some(db);
                }
            }
            if self.samples[i + 1].t >= hi {
                break;
            }
        }
        None
    }

    fn annotate(&self, params: &EpidemicParams) -> Vec<Event> {
        const TOL: f64 = 1e-9;
        let mut events = Vec::new();
        let horizon = self.t_end();
        let arcs: Vec<&ControlSegment> =
            self.schedule.segments().iter().filter(|s| s.is_arc() && !s.is_empty()).collect();
        if arcs.is_empty() {
            if let Some(t) = self.locate(EventKind::YRisesTo(params.cap), (0.0, horizon), TOL) {
                events.push(Event { label: EventLabel::BoundaryHit, t });
            }
        } else {
            for arc in arcs {
                events.push(Event { label: EventLabel::BoundaryHit, t: arc.t_start });
                events.push(Event { label: EventLabel::BoundaryExit, t: arc.t_end });
            }
        }
        if let Some(t) = self.locate(EventKind::XCrosses(1.0 / params.sigma_f), (0.0, horizon), TOL) {
            events.push(Event { label: EventLabel::HerdCrossing, t });
        }
        let (t_max, _) = self.max_y();
        if t_max > 0.0 && t_max < horizon {
            let step = self.samples.get(1).map(|s| s.t).unwrap_or(horizon);
            let t = self.locate(EventKind::YPeak, (t_max - 2.0 * step, t_max + 2.0 * step), TOL).unwrap_or(t_max);
            events.push(Event { label: EventLabel::YPeak, t });
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        events
    }
}

/// Bisection on a predicate that holds at `lo` and fails at `hi`.
fn bisect_in(mut lo: f64, mut hi: f64, tol: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::final_size::rho;

    fn reference() -> EpidemicParams {
        EpidemicParams::reference(0.03, 40.0)
    }

    #[test]
    fn evaluate_constant_segment() {
        let s = ControlSchedule::constant(365.0, 1.5).unwrap();
        assert_eq!(s.evaluate(0.0).unwrap(), 1.5);
        assert_eq!(s.evaluate(200.0).unwrap(), 1.5);
        assert_eq!(s.evaluate(365.0).unwrap(), 1.5);
    }

    #[test]
    fn evaluate_boundary_arc() {
        let arc = ControlSegment::arc(0.8, 100.0, 0.1 * 0.03, 200.0);
        assert!((arc.sigma(100.0) - 1.25).abs() < 1e-15);
        assert!((arc.sigma(110.0) - 1.0 / 0.77).abs() < 1e-12);
        assert!((arc.sigma(110.0) - 1.298_701_298_7).abs() < 1e-9);
    }

    #[test]
    fn evaluate_outside_window_is_domain_error() {
        let s = ControlSchedule::constant(365.0, 1.5).unwrap();
        assert!(matches!(s.evaluate(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(s.evaluate(365.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn junctions_are_right_continuous() {
        let p = reference();
        let s = ControlSchedule::strict_window(&p, 100.0, 50.0).unwrap();
        assert_eq!(s.evaluate(100.0).unwrap(), p.sigma_s);
        assert_eq!(s.evaluate(150.0).unwrap(), p.sigma_f);
        assert_eq!(s.evaluate(99.999).unwrap(), p.sigma_f);
    }

    #[test]
    fn gaps_and_overlaps_rejected() {
        let gap = ControlSchedule::new(vec![
            ControlSegment::constant(1.5, 0.0, 10.0),
            ControlSegment::constant(0.8, 10.5, 365.0),
        ]);
        assert!(matches!(gap, Err(Error::Schedule(_))));
        let overlap = ControlSchedule::new(vec![
            ControlSegment::constant(1.5, 0.0, 10.0),
            ControlSegment::constant(0.8, 9.0, 365.0),
        ]);
        assert!(matches!(overlap, Err(Error::Schedule(_))));
        let late = ControlSchedule::new(vec![ControlSegment::constant(1.5, 1.0, 365.0)]);
        assert!(matches!(late, Err(Error::Schedule(_))));
    }

    #[test]
    fn integrate_rejects_mismatched_horizon() {
        let s = ControlSchedule::constant(100.0, 1.5).unwrap();
        assert!(matches!(integrate(&reference(), &s, 0.01), Err(Error::Schedule(_))));
    }

    #[test]
    fn no_infection_is_stationary() {
        let p = EpidemicParams { y0: 0.0, ..reference() };
        let s = ControlSchedule::constant(p.horizon, p.sigma_f).unwrap();
        let traj = integrate(&p, &s, 0.5).unwrap();
        for smp in traj.samples() {
            assert_eq!(smp.x, p.x0);
            assert_eq!(smp.y, 0.0);
        }
    }

    #[test]
    fn rho_conserved_under_free_dynamics() {
        let p = reference();
        let s = ControlSchedule::constant(p.horizon, p.sigma_f).unwrap();
        let traj = integrate(&p, &s, 0.01).unwrap();
        let r0 = rho(p.x0, p.y0, p.sigma_f);
        let drift = traj
            .samples()
            .iter()
            .map(|s| ((rho(s.x, s.y, p.sigma_f) - r0) / r0).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-8, "relative drift {drift}");
    }

    #[test]
    fn free_hitting_time_of_cap() {
        let p = reference();
        let s = ControlSchedule::constant(p.horizon, p.sigma_f).unwrap();
        let traj = integrate(&p, &s, 0.01).unwrap();
        let t = traj.locate(EventKind::YRisesTo(0.03), (0.0, p.horizon), 1e-6).unwrap();
        assert!((t - 212.93).abs() < 0.01, "t = {t}");
    }

    #[test]
    fn cap_of_one_is_never_hit() {
        let p = reference();
        let s = ControlSchedule::constant(p.horizon, p.sigma_f).unwrap();
        let found = locate_event(&p, &s, EventKind::YRisesTo(1.0), (0.0, p.horizon), 0.01, 1e-6).unwrap();
        assert_eq!(found, None);
    }

    #[test]
    fn herd_crossing_matches_grid_scan() {
        let p = reference();
        let s = ControlSchedule::constant(p.horizon, p.sigma_f).unwrap();
        let traj = integrate(&p, &s, 0.01).unwrap();
        let level = 1.0 / p.sigma_f;
        let t_m = traj.locate(EventKind::XCrosses(level), (0.0, p.horizon), 1e-6).unwrap();
        assert!((traj.x_at(t_m) - level).abs() < 1e-6);

        // fine-grid scan oracle
        let mut scan = None;
        let n = 3_650_000;
        for k in 0..n {
            let t0 = p.horizon * k as f64 / n as f64;
            let t1 = p.horizon * (k + 1) as f64 / n as f64;
            if traj.x_at(t0) > level && traj.x_at(t1) <= level {
                scan = Some(0.5 * (t0 + t1));
                break;
            }
        }
        assert!((scan.unwrap() - t_m).abs() < 1e-4);

        let peak = traj.locate(EventKind::YPeak, (0.0, p.horizon), 1e-6).unwrap();
        assert!((peak - t_m).abs() < 1e-5, "peak {peak} vs t_m {t_m}");
    }

    #[test]
    fn boundary_x_arithmetic() {
        let p = EpidemicParams { gamma: 0.1, cap: 0.03, ..reference() };
        assert_eq!(boundary_x(&p, 0.9, 10.0, 10.0).unwrap(), 0.9);
        assert!((boundary_x(&p, 0.9, 10.0, 60.0).unwrap() - 0.75).abs() < 1e-14);
        assert!(matches!(boundary_x(&p, 0.1, 0.0, 1000.0), Err(Error::ArcOverrun { .. })));
    }

    #[test]
    fn integrated_arc_tracks_closed_form() {
        let p = reference();
        let free = integrate(&p, &ControlSchedule::constant(p.horizon, p.sigma_f).unwrap(), 0.01).unwrap();
        let t1 = free.locate(EventKind::YRisesTo(p.cap), (0.0, p.horizon), 1e-12).unwrap();
        let x1 = free.x_at(t1);
        let s = ControlSchedule::with_hold(&p, t1, x1, p.cap, 280.0, 20.0).unwrap();
        let traj = integrate(&p, &s, 0.01).unwrap();
        for smp in traj.samples().iter().filter(|s| s.t >= t1 && s.t <= 280.0) {
            assert!((smp.y - p.cap).abs() <= 1e-6, "y = {} at {}", smp.y, smp.t);
            let xb = boundary_x(&p, x1, t1, smp.t).unwrap();
            assert!((smp.x - xb).abs() <= 1e-8, "x = {} vs {} at {}", smp.x, xb, smp.t);
            assert!((smp.sigma - 1.0 / xb).abs() < 1e-9 || smp.t == 280.0);
        }
    }

    #[test]
    fn v_matches_exact_schedule_integral() {
        let p = reference();
        let s = ControlSchedule::with_hold(&p, 212.9, 0.9, p.cap, 250.0, 30.0).unwrap();
        let traj = integrate(&p, &s, 0.01).unwrap();
        assert!((traj.terminal().v - s.integral()).abs() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // smooth constant-sigma scenario, compared against a much finer run
        let p = EpidemicParams { horizon: 100.0, y0: 0.01, x0: 0.98, ..reference() };
        let s = ControlSchedule::constant(p.horizon, 1.5).unwrap();
        let end = |h: f64| integrate(&p, &s, h).unwrap().terminal();
        let truth = end(0.005);
        let e1 = (end(0.8).x - truth.x).abs();
        let e2 = (end(0.4).x - truth.x).abs();
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn dense_output_hits_nodes() {
        let p = reference();
        let s = ControlSchedule::strict_window(&p, 100.0, 40.0).unwrap();
        let traj = integrate(&p, &s, 0.3).unwrap();
        for smp in traj.samples().iter().step_by(37) {
            let st = traj.state_at(smp.t);
            assert!((st[0] - smp.x).abs() < 1e-15 && (st[1] - smp.y).abs() < 1e-15);
        }
        // junctions are mesh points
        assert!(traj.samples().iter().any(|s| s.t == 100.0));
        assert!(traj.samples().iter().any(|s| s.t == 140.0));
    }

    #[test]
    fn events_are_annotated() {
        let p = reference();
        let traj = integrate(&p, &ControlSchedule::constant(p.horizon, p.sigma_f).unwrap(), 0.01).unwrap();
        let labels: Vec<EventLabel> = traj.events().iter().map(|e| e.label).collect();
        assert!(labels.contains(&EventLabel::BoundaryHit));
        assert!(labels.contains(&EventLabel::HerdCrossing));
        assert!(labels.contains(&EventLabel::YPeak));
    }
}
