//! Scalar bracketing helpers for fallible objective functions.

use crate::error::Result;

/// Illinois false position for a sign change on `[a, b]` with known end values.
pub(crate) fn illinois<F>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    debug_assert!(fa * fb < 0.0);
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        // fall back to bisection if false position lands on or outside an end
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Plain bisection; `f` is only asked for its sign.
pub(crate) fn bisect<F>(mut f: F, mut a: f64, mut b: f64, sign_a: bool, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<bool>,
{
    while (b - a).abs() > xtol {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if f(m)? == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((a, b))
}

/// Golden-section search for a maximum of `f` on `[a, b]`; returns the final bracket.
pub(crate) fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > xtol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok((a, b))
}
