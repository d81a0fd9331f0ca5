//! Scalar root finding: bracketed bisection, optional Newton polish, and
//! sign-change scans for locating all simple roots on an interval.

use crate::{Error, Result};

/// Bisection on `[lo, hi]`; `f(lo)` and `f(hi)` must have opposite signs.
/// Runs until the bracket width drops below `xtol` (absolute) or the midpoint
/// evaluates to exactly zero.
pub fn bisect<F>(mut lo: f64, mut hi: f64, f: F, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::internal(format!(
            "bisect: no sign change on [{lo}, {hi}] (f = {flo}, {fhi})"
        )));
    }
    // 200 halvings exhaust f64 resolution on any finite bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < xtol {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Newton iterations from `x0`, falling back to `x0` when a step leaves
/// `[lo, hi]` or the derivative degenerates. Used to polish bisection output.
pub fn newton_polish<F, D>(x0: f64, lo: f64, hi: f64, f: F, df: D, steps: usize) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = x0;
    let mut best = x0;
    let mut best_abs = f(x0).abs();
    for _ in 0..steps {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - f(x) / d;
        if !next.is_finite() || next < lo || next > hi {
            break;
        }
        x = next;
        let fx = f(x).abs();
        if fx < best_abs {
            best_abs = fx;
            best = x;
        }
        if fx == 0.0 {
            break;
        }
    }
    best
}

/// All sign-change brackets of `f` on a uniform grid over `[lo, hi]` with the
/// given `step`. Grid points that evaluate exactly to zero produce a
/// degenerate bracket around the point. Tangential (even-order) roots without
/// a sign change are not detected.
pub fn sign_change_brackets<F>(lo: f64, hi: f64, step: f64, f: F) -> Vec<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut out = Vec::new();
    if hi <= lo {
        return out;
    }
    let n = ((hi - lo) / step).ceil() as usize;
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..=n {
        let x = if i == n { hi } else { lo + step * i as f64 };
        let fx = f(x);
        if f_prev == 0.0 {
            out.push((x_prev, x_prev));
        } else if fx != 0.0 && f_prev.signum() != fx.signum() {
            out.push((x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == 0.0 {
        out.push((x_prev, x_prev));
    }
    out
}

/// All simple roots of `f` on `[lo, hi]`: sign-change scan at `step`
/// resolution, each bracket refined by bisection to `xtol`.
pub fn scan_roots<F>(lo: f64, hi: f64, step: f64, xtol: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Copy,
{
    let mut roots = Vec::new();
    for (a, b) in sign_change_brackets(lo, hi, step, f) {
        let r = if a == b { a } else { bisect(a, b, f, xtol)? };
        roots.push(r);
    }
    Ok(roots)
}

/// Threshold of a monotone boolean predicate: smallest `x` in `[lo, hi]` with
/// `pred(x)` true, to absolute tolerance `xtol`. Requires `!pred(lo)` and
/// `pred(hi)`.
pub fn monotone_threshold<P>(mut lo: f64, mut hi: f64, xtol: f64, pred: P) -> Result<f64>
where
    P: Fn(f64) -> bool,
{
    if pred(lo) {
        return Err(Error::internal(format!(
            "monotone_threshold: predicate already true at lo = {lo}"
        )));
    }
    if !pred(hi) {
        return Err(Error::internal(format!(
            "monotone_threshold: predicate still false at hi = {hi}"
        )));
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Maximum of a concave function on `[lo, hi]` by golden-section search.
/// Returns `(argmax, max)`.
pub fn concave_max<F>(lo: f64, hi: f64, xtol: f64, f: F) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
