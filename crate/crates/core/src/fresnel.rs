//! Fresnel integrals and the projection-threshold equation
//! `|C(ζ) + jS(ζ)| / ζ = Δ` that sets the distance-ring spacing.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

const SEGMENT_TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 40;

#[inline]
fn integrand(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, FRAC_PI_2 * t * t)
}

fn simpson(a: f64, b: f64, fa: Complex64, fm: Complex64, fb: Complex64) -> Complex64 {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

fn adaptive(a: f64, b: f64, fa: Complex64, fm: Complex64, fb: Complex64, whole: Complex64, tol: f64, depth: u32) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = integrand(lm);
    let frm = integrand(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + adaptive(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `C(ζ) + jS(ζ) = ∫₀^ζ e^{jπt²/2} dt` by adaptive Simpson quadrature.
pub fn fresnel_complex(zeta: f64) -> Result<Complex64> {
    if !(zeta >= 0.0) {
        return Err(Error::NegativeFresnelArgument(zeta));
    }
    if zeta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // One segment per half oscillation keeps each adaptive call well conditioned.
    let segments = (zeta * zeta).ceil().max(1.0) as usize * 2;
    let h = zeta / segments as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for s in 0..segments {
        let a = s as f64 * h;
        let b = if s + 1 == segments { zeta } else { a + h };
        let (fa, fm, fb) = (integrand(a), integrand(0.5 * (a + b)), integrand(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adaptive(a, b, fa, fm, fb, whole, SEGMENT_TOL, MAX_DEPTH);
    }
    Ok(total)
}

/// Fresnel cosine and sine integrals `(C(ζ), S(ζ))`.
pub fn fresnel(zeta: f64) -> Result<(f64, f64)> {
    let z = fresnel_complex(zeta)?;
    Ok((z.re, z.im))
}

/// `|C(ζ) + jS(ζ)| / ζ`, continuous at the origin with value 1.
pub fn projection_envelope(zeta: f64) -> Result<f64> {
    if zeta == 0.0 {
        return Ok(1.0);
    }
    Ok(fresnel_complex(zeta)?.norm() / zeta)
}

const SCAN_STEP: f64 = 0.01;
const SCAN_LIMIT: f64 = 100.0;

/// Smallest `ζ > 0` with `|C(ζ) + jS(ζ)| / ζ = delta`.
///
/// Scans forward to bracket the first crossing of the envelope, then bisects.
pub fn solve_zeta(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ThresholdOutOfRange(delta));
    }
    let mut lo = 0.0;
    let mut hi = SCAN_STEP;
    while projection_envelope(hi)? > delta {
        lo = hi;
        hi += SCAN_STEP;
        if hi > SCAN_LIMIT {
            return Err(Error::ThresholdOutOfRange(delta));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if projection_envelope(mid)? > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
