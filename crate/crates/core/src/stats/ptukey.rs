//! Studentized range distribution.
//!
//! For `k` means and `df` error degrees of freedom,
//!
//! ```text
//! P(Q <= q) = ∫_0^∞ f_df(s) W(q s) ds
//! W(w)      = k ∫ φ(z) [Φ(z) - Φ(z - w)]^(k-1) dz
//! ```
//!
//! where `f_df` is the density of `sqrt(χ²_df / df)` and `W` the CDF of the
//! range of `k` standard normals. Both integrals are evaluated with adaptive
//! Gauss–Kronrod quadrature.

use super::quad::integrate;
use super::special::{ln_gamma, normal_cdf, normal_pdf};
use crate::error::{Error, Result};

const INNER_TOL: f64 = 1e-11;
const OUTER_TOL: f64 = 1e-9;
const MAX_PANELS: usize = 4000;

/// CDF of the range of `k` independent standard normals.
pub fn normal_range_cdf(w: f64, k: u32) -> Result<f64> {
    if w <= 0.0 {
        return Ok(0.0);
    }
    let km1 = (k - 1) as i32;
    let integrand = |z: f64| {
        let inner = normal_cdf(z) - normal_cdf(z - w);
        if inner <= 0.0 {
            0.0
        } else {
            normal_pdf(z) * libm::pow(inner, km1 as f64)
        }
    };
    // the integrand is bounded by φ(z), negligible beyond |z| = 8.5
    let mut breaks = [-8.5, -3.0, 0.0, (0.5 * w).min(8.0), 8.5];
    breaks.sort_by(f64::total_cmp);
    let v = integrate(integrand, &breaks, INNER_TOL / k as f64, MAX_PANELS)? * k as f64;
    Ok(v.clamp(0.0, 1.0))
}

fn ln_scaled_chi_density(s: f64, df: f64) -> f64 {
    let half = 0.5 * df;
    half * libm::log(df) - ln_gamma(half) - (half - 1.0) * core::f64::consts::LN_2
        + (df - 1.0) * libm::log(s)
        - half * s * s
}

fn check(k: u32, df: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::Parameter(alloc::format!("studentized range needs k >= 2, got {k}")));
    }
    if !(df >= 1.0) {
        return Err(Error::Parameter(alloc::format!("studentized range needs df >= 1, got {df}")));
    }
    Ok(())
}

/// `P(Q <= q)` for the studentized range with `k` groups and `df` degrees
/// of freedom.
pub fn ptukey(q: f64, k: u32, df: f64) -> Result<f64> {
    check(k, df)?;
    if q.is_nan() {
        return Err(Error::InvalidInput("studentized range statistic is NaN".into()));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    let mode = libm::sqrt((df - 1.0) / df);
    let sd = 1.0 / libm::sqrt(2.0 * df);
    let hi = mode + 40.0 * sd + 1.0;
    let mut breaks = alloc::vec![0.0];
    for off in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
        let x = mode + off * sd;
        if x > 0.0 && x < hi {
            breaks.push(x);
        }
    }
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut failure = None;
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let density = libm::exp(ln_scaled_chi_density(s, df));
        if density < 1e-300 {
            return 0.0;
        }
        match normal_range_cdf(q * s, k) {
            Ok(w) => density * w,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let result = integrate(integrand, &breaks, OUTER_TOL, MAX_PANELS);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(result?.clamp(0.0, 1.0))
}

/// Upper tail `P(Q > q)`.
pub fn ptukey_sf(q: f64, k: u32, df: f64) -> Result<f64> {
    Ok((1.0 - ptukey(q, k, df)?).clamp(0.0, 1.0))
}

/// Quantile: the `q` with `P(Q <= q) = p`, found by bracketed regula falsi
/// (Illinois variant) to 1e-10 in `q`.
pub fn qtukey(p: f64, k: u32, df: f64) -> Result<f64> {
    check(k, df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(alloc::format!("probability {p} outside (0, 1)")));
    }
    let f = |q: f64| ptukey(q, k, df).map(|v| v - p);
    let (mut a, mut fa) = (0.0, -p);
    let mut b = 1.0;
    let mut fb = f(b)?;
    while fb < 0.0 {
        a = b;
        fa = fb;
        b *= 2.0;
        if b > 1e6 {
            return Err(Error::NumericalFailure("studentized range quantile not bracketed".into()));
        }
        fb = f(b)?;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        if b - a < 1e-10 {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if fa.abs() < 1e-14 {
            return Ok(a);
        }
        if fb.abs() < 1e-14 {
            return Ok(b);
        }
    }
    Ok(0.5 * (a + b))
}
