//! Adaptive Simpson quadrature.

/// Integrates `f` over `[a, b]` to an absolute tolerance `tol`.
///
/// Richardson-corrected adaptive Simpson; recursion depth is capped at 50,
/// which is never reached for the piecewise smooth integrands used here.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates over consecutive breakpoints so that kinks and jumps of `f`
/// fall on panel boundaries.
pub fn piecewise<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], tol: f64) -> f64 {
    let panels = breakpoints.len().saturating_sub(1).max(1) as f64;
    breakpoints
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], tol / panels))
        .sum()
}
