//! Bracketing and bisection for scalar functions of time.

use crate::error::{Error, Result};

/// Bisection for a root of `f` in `[lo, hi]` given endpoint values of opposite
/// sign (zero counts as non-positive). Stops when the bracket is below `tol`.
pub fn bisect_values(
    mut f: impl FnMut(f64) -> Result<f64>,
    (mut lo, f_lo): (f64, f64),
    (mut hi, f_hi): (f64, f64),
    tol: f64,
) -> Result<f64> {
    if !(f_lo.is_finite() && f_hi.is_finite()) {
        return Err(Error::Bracket(format!("non-finite endpoint values {f_lo}, {f_hi}")));
    }
    let lo_positive = f_lo > 0.0;
    if lo_positive == (f_hi > 0.0) {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}]: f = {f_lo}, {f_hi}"
        )));
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite value {v} at {mid}")));
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection that evaluates the endpoints itself.
pub fn bisect(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    bisect_values(f, (lo, f_lo), (hi, f_hi), tol)
}

/// A bracket `[(a, f(a)), (b, f(b))]` across which `f > 0` changes truth value.
pub type Bracket = ((f64, f64), (f64, f64));

/// Evaluates `f` on `n + 1` equally spaced points of `[lo, hi]` and returns
/// the first adjacent pair across which the sign changes.
pub fn scan_bracket(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, n: usize) -> Result<Option<Bracket>> {
    let n = n.max(1);
    let mut prev = (lo, f(lo)?);
    for k in 1..=n {
        let t = if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 };
        let cur = (t, f(t)?);
        if (prev.1 > 0.0) != (cur.1 > 0.0) {
            return Ok(Some((prev, cur)));
        }
        prev = cur;
    }
    Ok(None)
}
