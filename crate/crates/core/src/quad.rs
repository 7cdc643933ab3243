//! Adaptive quadrature used where a kernel has no closed-form integral.

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -adaptive_simpson(f, b, a, rel_tol);
    }
    // coarse pass fixes the absolute scale for the local tolerance
    let n = 16;
    let h = (b - a) / n as f64;
    let mut coarse = 0.0;
    let mut pieces = Vec::with_capacity(n);
    for k in 0..n {
        let x0 = a + k as f64 * h;
        let x1 = if k + 1 == n { b } else { x0 + h };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        coarse += s;
        pieces.push((x0, x1, f0, fm, f1, s));
    }
    let eps = rel_tol * coarse.abs().max(f64::MIN_POSITIVE) / n as f64;
    pieces
        .into_iter()
        .map(|(x0, x1, f0, fm, f1, s)| simpson_rec(f, x0, x1, f0, fm, f1, s, eps, 48))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
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
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Integral of a nonnegative, nonincreasing `f` over `[a, ∞)`.
///
/// Integrates over geometrically growing panels and closes the sum with a
/// power-law remainder estimate from the local decay exponent. Returns
/// `+∞` when the local exponent never exceeds one before `1e100`.
pub fn tail<F: Fn(f64) -> f64>(f: &F, a: f64, rel_tol: f64) -> f64 {
    let mut x = a;
    let mut width = a.max(1.0);
    let mut total = 0.0;
    while x < 1e100 {
        let next = x + width;
        total += adaptive_simpson(f, x, next, rel_tol * 0.1);
        x = next;
        width *= 2.0;
        let fx = f(x);
        if fx == 0.0 {
            return total;
        }
        let exponent = (fx / f(2.0 * x)).ln() / std::f64::consts::LN_2;
        if exponent > 1.0 + 1e-6 {
            let remainder = fx * x / (exponent - 1.0);
            if remainder <= rel_tol * total {
                return total + remainder;
            }
        }
    }
    f64::INFINITY
}
