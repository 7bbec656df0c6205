//! Problem instances and numerical options.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complete problem instance: SIR rates, control bounds, budget and cap.
///
/// Fields are public so tests can build degenerate instances (for example
/// `y0 = 0`); production code goes through [`EpidemicParams::validated`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Recovery rate, 1/time.
    pub gamma: f64,
    /// Reproduction number under strict quarantine.
    pub sigma_s: f64,
    /// Reproduction number without restrictions.
    pub sigma_f: f64,
    /// End of the intervention window.
    pub horizon: f64,
    /// Maximum total time of strict quarantine allowed by the budget.
    pub tau: f64,
    /// Maximum allowed infected fraction.
    pub cap: f64,
    pub x0: f64,
    pub y0: f64,
}

impl EpidemicParams {
    /// The scenario family used throughout the numerical study: T = 365,
    /// gamma = 0.1, sigma_s = 0.8, sigma_f = 1.5 and a single initial case in
    /// a million.
    pub fn reference(cap: f64, tau: f64) -> Self {
        EpidemicParams {
            gamma: 0.1,
            sigma_s: 0.8,
            sigma_f: 1.5,
            horizon: 365.0,
            tau,
            cap,
            x0: 1.0 - 1e-6,
            y0: 1e-6,
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gamma,
            self.sigma_s,
            self.sigma_f,
            self.horizon,
            self.tau,
            self.cap,
            self.x0,
            self.y0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(0.0 <= self.sigma_s && self.sigma_s < self.sigma_f) {
            return Err(Error::InvalidParams(format!(
                "need 0 <= sigma_s < sigma_f, got sigma_s = {}, sigma_f = {}",
                self.sigma_s, self.sigma_f
            )));
        }
        if !(self.sigma_s < 1.0) {
            return Err(Error::InvalidParams(format!("sigma_s must be below 1, got {}", self.sigma_s)));
        }
        if !(0.0 < self.tau && self.tau < self.horizon) {
            return Err(Error::InvalidParams(format!(
                "need 0 < tau < horizon, got tau = {}, horizon = {}",
                self.tau, self.horizon
            )));
        }
        if !(self.cap > 0.0) {
            return Err(Error::InvalidParams(format!("cap must be positive, got {}", self.cap)));
        }
        if !(self.x0 > 0.0 && self.y0 > 0.0 && self.x0 + self.y0 <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "initial state ({}, {}) must satisfy x0 > 0, y0 > 0, x0 + y0 <= 1",
                self.x0, self.y0
            )));
        }
        if !(self.y0 < self.cap) {
            return Err(Error::Infeasible(format!(
                "initial infected fraction {} is not below the cap {}",
                self.y0, self.cap
            )));
        }
        Ok(())
    }

    /// Lower bound on the integral of sigma over `[0, T]`.
    pub fn budget(&self) -> f64 {
        self.sigma_s * self.tau + self.sigma_f * (self.horizon - self.tau)
    }

    /// Rate at which x decreases while y is held at `level` by the boundary control.
    pub fn drain(&self, level: f64) -> f64 {
        self.gamma * level
    }
}

/// Integration and root-finding tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Fixed RK4 step.
    pub step: f64,
    /// Width of the final bisection bracket when localizing state events.
    pub event_tol: f64,
    /// Width of the final bisection bracket for switching-time roots.
    pub root_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { step: 0.01, event_tol: 1e-6, root_tol: 1e-6 }
    }
}

impl SolverOptions {
    pub fn with_step(step: f64) -> Self {
        SolverOptions { step, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("step", self.step), ("event_tol", self.event_tol), ("root_tol", self.root_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid() {
        assert!(EpidemicParams::reference(0.03, 40.0).validate().is_ok());
    }

    #[test]
    fn rejects_bad_instances() {
        let base = EpidemicParams::reference(0.03, 40.0);
        let cases = [
            EpidemicParams { sigma_s: 1.6, ..base },
            EpidemicParams { sigma_s: 1.0, sigma_f: 2.0, ..base },
            EpidemicParams { tau: 0.0, ..base },
            EpidemicParams { tau: 365.0, ..base },
            EpidemicParams { gamma: 0.0, ..base },
            EpidemicParams { y0: 0.0, ..base },
            EpidemicParams { x0: 0.9, y0: 0.2, ..base },
            EpidemicParams { cap: -1.0, ..base },
        ];
        for p in cases {
            assert!(matches!(p.validate(), Err(Error::InvalidParams(_))), "{p:?}");
        }
        let over = EpidemicParams { cap: 1e-7, ..base };
        assert!(matches!(over.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn budget_matches_definition() {
        let p = EpidemicParams::reference(0.03, 40.0);
        assert!((p.budget() - (0.8 * 40.0 + 1.5 * 325.0)).abs() < 1e-12);
    }
}
