use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use sircap_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sircap_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn solve_round_trip() {
    unsafe {
        let mut params: *mut SircapParams = ptr::null_mut();
        assert_eq!(sircap_params_reference(0.03, 40.0, &mut params), SircapStatus::Ok);
        let mut policy: *mut SircapPolicy = ptr::null_mut();
        assert_eq!(sircap_solve(params, 0.0, &mut policy), SircapStatus::Ok);
        assert!(last_error().is_empty());

        let (mut t1, mut t2, mut mu, mut x_inf) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(sircap_policy_times(policy, &mut t1, &mut t2, &mut mu), SircapStatus::Ok);
        assert_eq!(sircap_policy_x_inf(policy, &mut x_inf), SircapStatus::Ok);
        let mut case = SircapCase::Case11;
        assert_eq!(sircap_policy_case(policy, &mut case), SircapStatus::Ok);
        let mut verified = false;
        assert_eq!(sircap_policy_verified(policy, &mut verified), SircapStatus::Ok);

        assert_eq!(case, SircapCase::Case21);
        assert!(verified);
        assert!((t1 - 212.93).abs() < 0.05, "t1 = {t1}");
        assert!((t2 - 286.5).abs() < 0.1, "t2 = {t2}");
        assert!((mu - 16.5).abs() < 0.1, "mu = {mu}");
        assert!((x_inf - 0.5394).abs() < 1e-3, "x_inf = {x_inf}");

        sircap_policy_free(policy);
        sircap_params_free(params);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut params: *mut SircapParams = ptr::null_mut();
        let s = sircap_params_new(0.1, 0.8, 1.5, 365.0, 40.0, 1e-7, 0.999999, 1e-6, &mut params);
        assert_eq!(s, SircapStatus::Infeasible);
        assert!(params.is_null());
        assert!(!last_error().is_empty());

        let s = sircap_params_new(-0.1, 0.8, 1.5, 365.0, 40.0, 0.03, 0.999999, 1e-6, &mut params);
        assert_eq!(s, SircapStatus::InvalidParams);

        assert_eq!(sircap_params_reference(0.03, 40.0, ptr::null_mut()), SircapStatus::NullPointer);
        let mut policy: *mut SircapPolicy = ptr::null_mut();
        assert_eq!(sircap_solve(ptr::null(), 0.0, &mut policy), SircapStatus::NullPointer);
        assert_eq!(sircap_lambert_w0(-1.0, ptr::null_mut()), SircapStatus::NullPointer);

        let mut w = 0.0;
        assert_eq!(sircap_lambert_w0(-1.0, &mut w), SircapStatus::Domain);

        // freeing null is a no-op
        sircap_params_free(ptr::null_mut());
        sircap_policy_free(ptr::null_mut());
    }
}

#[test]
fn scalar_functions() {
    unsafe {
        let mut w = 0.0;
        assert_eq!(sircap_lambert_w0(std::f64::consts::E, &mut w), SircapStatus::Ok);
        assert!((w - 1.0).abs() < 1e-14);

        let mut x_inf = 0.0;
        assert_eq!(sircap_x_infinity(0.999999, 1e-6, 1.5, &mut x_inf), SircapStatus::Ok);
        let rho: f64 = 0.999999 * (-1.5f64).exp();
        assert!((x_inf - rho * (1.5 * x_inf).exp()).abs() < 1e-12);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sircap.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for name in ["sircap_solve", "sircap_params_new", "sircap_last_error_message", "SircapStatus_Infeasible"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
