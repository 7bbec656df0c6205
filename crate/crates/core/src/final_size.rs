//! Closed-form final size of an SIR epidemic run at constant sigma.
//!
//! Under constant sigma, `rho = x exp(-sigma (x + y))` is conserved and the
//! limit `x_inf` is the smaller root of `x_inf = rho exp(sigma x_inf)`, which
//! is `-W0(-sigma rho) / sigma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;

/// Principal branch of the Lambert W function on `[-1/e, inf)`.
pub fn lambert_w0(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::LambertDomain(z));
    }
    if z == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let q = z + INV_E;
    if q < 0.0 {
        // a few ulps below the branch point is rounding noise
        if q > -4.0 * f64::EPSILON {
            return Ok(-1.0);
        }
        return Err(Error::LambertDomain(z));
    }
    let p = (2.0 * std::f64::consts::E * q).sqrt();
    if p < 1e-3 {
        // branch-point series, truncation error below p^6
        return Ok(-1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0 + p * 769.0 / 17280.0)))));
    }
    let mut w = if z < -0.25 {
        -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    } else if z.abs() <= 0.25 {
        z * (1.0 + z * (-1.0 + z * 1.5))
    } else if z < 3.0 {
        (1.0 + z).ln() * 0.8
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - z;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-14 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

/// Conserved quantity of the constant-sigma flow.
#[inline]
pub fn rho(x: f64, y: f64, sigma: f64) -> f64 {
    x * (-sigma * (x + y)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalSizeResult {
    pub x_inf: f64,
    /// Lambert W value used, `-sigma x_inf`.
    pub w_value: f64,
    /// `|x_inf - rho exp(sigma x_inf)|`.
    pub residual: f64,
}

/// Limiting susceptible fraction when the state `(x, y)` evolves with
/// constant `sigma` forever.
pub fn x_infinity(x: f64, y: f64, sigma: f64) -> Result<FinalSizeResult> {
    if sigma == 0.0 || (y == 0.0 && sigma * x <= 1.0) {
        return Ok(FinalSizeResult { x_inf: x, w_value: -sigma * x, residual: 0.0 });
    }
    let r = rho(x, y, sigma);
    let w = lambert_w0(-sigma * r)?;
    let x_inf = -w / sigma;
    let residual = (x_inf - r * (sigma * x_inf).exp()).abs();
    Ok(FinalSizeResult { x_inf, w_value: w, residual })
}

/// Partial derivative of `x_inf` with respect to x.
pub fn dxinf_dx(x: f64, y: f64, sigma: f64) -> Result<f64> {
    let xi = x_infinity(x, y, sigma)?.x_inf;
    Ok((1.0 - sigma * x) / x * xi / (1.0 - sigma * xi))
}

/// Partial derivative of `x_inf` with respect to y; negative whenever sigma > 0.
pub fn dxinf_dy(x: f64, y: f64, sigma: f64) -> Result<f64> {
    let xi = x_infinity(x, y, sigma)?.x_inf;
    Ok(-sigma * xi / (1.0 - sigma * xi))
}
