//! Scalar functions shared by belief propagation, population dynamics and the
//! large-degree theory.

use crate::error::{Error, Result};

/// Message function `f(xi) = log((1 + rho e^xi) / (1 + e^xi))`.
///
/// Total on the extended reals: `f(-inf) = 0`, `f(+inf) = log rho`. NaN
/// propagates; use [`try_message`] where NaN must be reported.
#[inline]
pub fn message(xi: f64, rho: f64) -> f64 {
    if xi > 0.0 {
        if xi == f64::INFINITY {
            return rho.ln();
        }
        let e = (-xi).exp();
        rho.ln() + (e / rho).ln_1p() - e.ln_1p()
    } else {
        let e = xi.exp();
        (rho * e).ln_1p() - e.ln_1p()
    }
}

pub fn try_message(xi: f64, rho: f64) -> Result<f64> {
    if xi.is_nan() {
        return Err(Error::InvalidField("NaN passed to the message function".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    Ok(message(xi, rho))
}

/// Logistic function `e^x / (1 + e^x)`, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(e^x + e^y)`.
#[inline]
pub fn log_add_exp(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn check_open_fraction(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidFraction(kappa))
    }
}

/// Decision threshold `log(kappa / (1 - kappa))`.
pub fn threshold(kappa: f64) -> Result<f64> {
    check_open_fraction(kappa)?;
    Ok((kappa / (1.0 - kappa)).ln())
}

/// External field `h = -kappa (a - b) - log((1 - kappa) / kappa)`.
pub fn field_h(a: f64, b: f64, kappa: f64) -> Result<f64> {
    check_open_fraction(kappa)?;
    Ok(-kappa * (a - b) - ((1.0 - kappa) / kappa).ln())
}

/// Bernoulli entropy in nats.
pub fn binary_entropy(kappa: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidFraction(kappa));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.ln() };
    Ok(term(kappa) + term(1.0 - kappa))
}

/// Smallest positive solution of `x = exp(lambda x)`, for `0 <= lambda <= 1/e`.
///
/// The root lies in `[1, e]`; found by bisection to machine precision.
pub fn x_star(lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let inv_e = (-1.0f64).exp();
    if lambda > inv_e {
        return Err(Error::NoFixedPoint(lambda));
    }
    let g = |x: f64| (lambda * x).exp() - x;
    let (mut lo, mut hi) = (1.0f64, std::f64::consts::E);
    if g(hi) >= 0.0 {
        // lambda within rounding of 1/e: double root at e.
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-instance constants used by every message update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub rho: f64,
    pub h: f64,
    pub theta: f64,
}

impl KernelParams {
    pub fn new(a: f64, b: f64, kappa: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "a and b must be positive, got a = {a}, b = {b}"
            )));
        }
        Ok(KernelParams {
            rho: a / b,
            h: field_h(a, b, kappa)?,
            theta: threshold(kappa)?,
        })
    }

    #[inline]
    pub fn f(&self, xi: f64) -> f64 {
        message(xi, self.rho)
    }
}
