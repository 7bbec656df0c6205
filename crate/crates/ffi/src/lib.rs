//! C ABI for the `sircap` solver.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every function returns a [`SircapStatus`];
//! on failure [`sircap_last_error_message`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sircap::constrained::CaseLabel;
use sircap::unconstrained::UnconstrainedCase;
use sircap::{ConstrainedPolicy, EpidemicParams, Error, SolverOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SircapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    Infeasible = 3,
    Numerical = 4,
    Domain = 5,
    Panic = 6,
}

/// Case of the optimal control, encoded as tens and units of its label
/// (for example 21 for case 2.1).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SircapCase {
    Case11 = 11,
    Case12 = 12,
    Case13 = 13,
    Case14 = 14,
    Case21 = 21,
    Case22 = 22,
    Case23 = 23,
}

/// Problem instance.
pub struct SircapParams {
    inner: EpidemicParams,
}

/// Solved policy.
pub struct SircapPolicy {
    inner: ConstrainedPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SircapStatus {
    match e {
        Error::InvalidParams(_) | Error::Schedule(_) => SircapStatus::InvalidParams,
        Error::Infeasible(_) => SircapStatus::Infeasible,
        Error::Domain { .. } | Error::LambertDomain(_) => SircapStatus::Domain,
        _ => SircapStatus::Numerical,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), SircapStatus>) -> SircapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SircapStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SircapStatus::Panic
        }
    }
}

fn fail(e: Error) -> SircapStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null() -> SircapStatus {
    set_error("null pointer argument");
    SircapStatus::NullPointer
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sircap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a validated problem instance.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sircap_params_new(
    gamma: f64,
    sigma_s: f64,
    sigma_f: f64,
    horizon: f64,
    tau: f64,
    cap: f64,
    x0: f64,
    y0: f64,
    out: *mut *mut SircapParams,
) -> SircapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let inner = EpidemicParams { gamma, sigma_s, sigma_f, horizon, tau, cap, x0, y0 }.validated().map_err(fail)?;
        *out = Box::into_raw(Box::new(SircapParams { inner }));
        Ok(())
    })
}

/// Reference scenario (gamma 0.1, sigma_s 0.8, sigma_f 1.5, T 365, one case in a million).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn sircap_params_reference(cap: f64, tau: f64, out: *mut *mut SircapParams) -> SircapStatus {
    let p = EpidemicParams::reference(cap, tau);
    sircap_params_new(p.gamma, p.sigma_s, p.sigma_f, p.horizon, p.tau, p.cap, p.x0, p.y0, out)
}

/// # Safety
/// `params` must be null or a handle from `sircap_params_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sircap_params_free(params: *mut SircapParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Solves the capped problem with RK4 step `step` (0 selects the default).
///
/// # Safety
/// `params` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn sircap_solve(params: *const SircapParams, step: f64, out: *mut *mut SircapPolicy) -> SircapStatus {
    guard(|| {
        if params.is_null() || out.is_null() {
            return Err(null());
        }
        let opts = if step == 0.0 { SolverOptions::default() } else { SolverOptions::with_step(step) };
        let inner = sircap::solve_constrained(&(*params).inner, &opts).map_err(fail)?;
        *out = Box::into_raw(Box::new(SircapPolicy { inner }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle from `sircap_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sircap_policy_free(policy: *mut SircapPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Hold entry `t1`, strict start `t2` and strict duration `mu`.
///
/// # Safety
/// `policy` must be a live handle; the outputs must be valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn sircap_policy_times(
    policy: *const SircapPolicy,
    t1: *mut f64,
    t2: *mut f64,
    mu: *mut f64,
) -> SircapStatus {
    guard(|| {
        if policy.is_null() || t1.is_null() || t2.is_null() || mu.is_null() {
            return Err(null());
        }
        let p = &(*policy).inner;
        *t1 = p.t1;
        *t2 = p.t2;
        *mu = p.mu;
        Ok(())
    })
}

/// Final susceptible fraction reached by the policy.
///
/// # Safety
/// `policy` must be a live handle and `out` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sircap_policy_x_inf(policy: *const SircapPolicy, out: *mut f64) -> SircapStatus {
    guard(|| {
        if policy.is_null() || out.is_null() {
            return Err(null());
        }
        *out = (*policy).inner.x_inf;
        Ok(())
    })
}

/// # Safety
/// `policy` must be a live handle and `out` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sircap_policy_case(policy: *const SircapPolicy, out: *mut SircapCase) -> SircapStatus {
    guard(|| {
        if policy.is_null() || out.is_null() {
            return Err(null());
        }
        *out = match (*policy).inner.case {
            CaseLabel::Unconstrained(UnconstrainedCase::Immediate) => SircapCase::Case11,
            CaseLabel::Unconstrained(UnconstrainedCase::Interior) => SircapCase::Case12,
            CaseLabel::Unconstrained(UnconstrainedCase::LatestFull) => SircapCase::Case13,
            CaseLabel::Unconstrained(UnconstrainedCase::RunsToHorizon) => SircapCase::Case14,
            CaseLabel::Interior => SircapCase::Case21,
            CaseLabel::Crossover => SircapCase::Case22,
            CaseLabel::RunsToHorizon => SircapCase::Case23,
        };
        Ok(())
    })
}

/// Whether every feasibility and hypothesis check passed.
///
/// # Safety
/// `policy` must be a live handle and `out` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sircap_policy_verified(policy: *const SircapPolicy, out: *mut bool) -> SircapStatus {
    guard(|| {
        if policy.is_null() || out.is_null() {
            return Err(null());
        }
        *out = (*policy).inner.verified;
        Ok(())
    })
}

/// Principal branch of the Lambert W function.
///
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sircap_lambert_w0(z: f64, out: *mut f64) -> SircapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = sircap::lambert_w0(z).map_err(fail)?;
        Ok(())
    })
}

/// Final susceptible fraction from state `(x, y)` under constant `sigma`.
///
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sircap_x_infinity(x: f64, y: f64, sigma: f64, out: *mut f64) -> SircapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = sircap::x_infinity(x, y, sigma).map_err(fail)?.x_inf;
        Ok(())
    })
}
