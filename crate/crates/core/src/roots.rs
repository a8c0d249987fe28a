//! Bracketed root finding and unimodal minimization.
//!
//! Bisection is used everywhere in this crate: the functions involved are
//! strictly monotone on the search brackets, so bisection is derivative-free
//! and unconditionally convergent. Tolerances apply to the bracket width.

use crate::error::{Error, Result};

/// Lower clip of the working domain; values of Psi and g' diverge at the
/// endpoints and brackets never need to reach further than this.
pub(crate) const DOMAIN_CLIP: f64 = 1e-12;

/// Bisects `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// Requires a sign change between the endpoints; returns the bracket
/// midpoint. `context` labels the failure if the bracket is invalid.
pub(crate) fn bisect<F>(f: F, lo: f64, hi: f64, tol: f64, context: &'static str) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    debug_assert!(lo < hi);
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::BracketingFailure { context });
    }
    let (mut lo, mut hi) = (lo, hi);
    let lo_negative = f_lo < 0.0;
    // 200 iterations cap: the bracket halves each step, so this is far more
    // than enough to reach any tol >= f64 resolution on (0, 1).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Walks the left endpoint geometrically toward `floor` until `f` changes
/// sign relative to `f(hi)`, then bisects. Used where the target function
/// diverges at 0 so a fixed left endpoint cannot be trusted.
pub(crate) fn bisect_with_left_search<F>(
    f: F,
    hi: f64,
    floor: f64,
    tol: f64,
    context: &'static str,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let f_hi = f(hi);
    let mut lo = 0.5 * hi;
    let mut tries = 0;
    while f(lo).signum() == f_hi.signum() {
        lo *= 0.5;
        tries += 1;
        if lo < floor || tries > 2000 {
            return Err(Error::BracketingFailure { context });
        }
    }
    bisect(f, lo, hi, tol, context)
}

/// Mirror of [`bisect_with_left_search`] for functions diverging at 1.
pub(crate) fn bisect_with_right_search<F>(
    f: F,
    lo: f64,
    ceil: f64,
    tol: f64,
    context: &'static str,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let f_lo = f(lo);
    let mut hi = lo + 0.5 * (1.0 - lo);
    let mut tries = 0;
    while f(hi).signum() == f_lo.signum() {
        hi += 0.5 * (1.0 - hi);
        tries += 1;
        if hi > ceil || tries > 2000 {
            return Err(Error::BracketingFailure { context });
        }
    }
    bisect(f, lo, hi, tol, context)
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_min<F>(f: F, lo: f64, hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_simple_root() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, "test").unwrap();
        assert!((root - std::f64::consts::SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_invalid_bracket() {
        let err = bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, "test").unwrap_err();
        assert!(matches!(err, Error::BracketingFailure { .. }));
    }

    #[test]
    fn left_search_reaches_small_roots() {
        // Root at 1e-9, function diverges towards 0.
        let f = |x: f64| 1.0 - 1e-9 / x;
        let root = bisect_with_left_search(f, 0.5, 1e-15, 1e-15, "test").unwrap();
        assert!((root - 1e-9).abs() / 1e-9 < 1e-3);
    }

    #[test]
    fn golden_section_locates_parabola_minimum() {
        let m = golden_section_min(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert!((m - 0.3).abs() < 1e-10);
    }
}
