//! Deterministic quadrature rules used by expected-risk oracles.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`. Fails with the partial value when the recursion depth runs out.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut ok = true;
    let v = simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut ok);
    if ok {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("adaptive Simpson did not reach tolerance {tol:e}; partial value {v}")))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *ok = false;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite `order`-point Gauss rule with `panels` equal panels on `[a, b]`.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Integrates over `[a, b]^2` with tensor composite Gauss rules, doubling the
/// panel count until successive estimates agree to `rel_tol`.
pub fn tensor_gauss_2d(f: &mut dyn FnMut(f64, f64) -> Result<f64>, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let mut eval = |panels: usize| -> Result<f64> {
        let rule = composite_gauss(a, b, panels, 5);
        let mut sum = 0.0;
        for &(x, wx) in &rule {
            for &(y, wy) in &rule {
                sum += wx * wy * f(x, y)?;
            }
        }
        Ok(sum)
    };
    refine(&mut eval, rel_tol)
}

/// Integrates over the boundary of `[0, 1]^2` by arc length.
pub fn unit_square_boundary(f: &mut dyn FnMut(f64, f64) -> Result<f64>, rel_tol: f64) -> Result<f64> {
    let mut eval = |panels: usize| -> Result<f64> {
        let rule = composite_gauss(0.0, 1.0, panels, 5);
        let mut sum = 0.0;
        for &(s, w) in &rule {
            sum += w * (f(s, 0.0)? + f(1.0, s)? + f(1.0 - s, 1.0)? + f(0.0, 1.0 - s)?);
        }
        Ok(sum)
    };
    refine(&mut eval, rel_tol)
}

fn refine(eval: &mut dyn FnMut(usize) -> Result<f64>, rel_tol: f64) -> Result<f64> {
    let mut panels = 2;
    let mut prev = eval(1)?;
    loop {
        let cur = eval(panels)?;
        if (cur - prev).abs() <= rel_tol * cur.abs() || cur == prev {
            return Ok(cur);
        }
        if panels >= 64 {
            return Err(Error::Numerical(format!(
                "tensor Gauss rule did not reach relative tolerance {rel_tol:e}; partial value {cur}"
            )));
        }
        prev = cur;
        panels *= 2;
    }
}
