//! Gauss-Legendre and Gauss-Hermite rules, composite refinement.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the standard
/// normal weight, so that `sum w_i f(x_i) ≈ E f(Z)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut z: f64 = 0.0;
    let mut roots = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * roots[0],
            3 => 1.91 * z - 0.91 * roots[1],
            _ => 2.0 * z - roots[i - 2],
        };
        let mut pp = 1.0;
        for _ in 0..100 {
            // Orthonormal Hermite recursion.
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        roots[i] = z;
        roots[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    let scale = std::f64::consts::PI.sqrt().recip();
    let nodes = roots.iter().rev().map(|r| r * std::f64::consts::SQRT_2).collect();
    let weights = weights.iter().rev().map(|w| w * scale).collect();
    (nodes, weights)
}

/// Largest level served by [`hermite_level`].
pub const HERMITE_LEVELS: usize = 5;

/// Cached normal-weight rule with `8 << level` nodes.
pub fn hermite_level(level: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: [OnceLock<(Vec<f64>, Vec<f64>)>; HERMITE_LEVELS] =
        [const { OnceLock::new() }; HERMITE_LEVELS];
    assert!(level < HERMITE_LEVELS, "hermite level {level} out of range");
    CACHE[level].get_or_init(|| gauss_hermite(8 << level))
}

/// Composite rule on `[a, b]` with `panels` equal panels of an `order`-point rule.
pub fn composite_rule<T: Real>(a: T, b: T, panels: usize, order: usize) -> Vec<(T, T)> {
    let (xs, ws) = gauss_legendre(order);
    let width = (b - a) / T::from_usize_lossy(panels);
    let half = width / T::lit(2.0);
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + width * T::from_usize_lossy(p) + half;
        for (x, w) in xs.iter().zip(&ws) {
            out.push((mid + half * T::lit(*x), half * T::lit(*w)));
        }
    }
    out
}

/// Integrates `f` over `[a, b]`, doubling the panel count until successive
/// estimates agree to `target` relative. Fails with [`Error::Quadrature`] when
/// the last change still exceeds `fail_tol` after `max_doublings`.
pub fn integrate_adaptive<T: Real>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    target: f64,
    fail_tol: f64,
) -> Result<T> {
    const ORDER: usize = 8;
    const MAX_DOUBLINGS: usize = 14;
    let eval = |panels: usize| -> T {
        composite_rule(a, b, panels, ORDER)
            .into_iter()
            .map(|(x, w)| f(x) * w)
            .sum()
    };
    let mut panels = 8;
    let mut prev = eval(panels);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        panels *= 2;
        let next = eval(panels);
        let scale = next.abs().max(T::lit(f64::MIN_POSITIVE)).as_f64();
        change = (next - prev).abs().as_f64() / scale;
        // Absolute floor for integrals that vanish.
        if change <= target || (next - prev).abs().as_f64() < 1e-15 {
            return Ok(next);
        }
        prev = next;
    }
    if change <= fail_tol {
        Ok(prev)
    } else {
        Err(Error::Quadrature {
            change,
            nodes: panels * ORDER,
        })
    }
}
