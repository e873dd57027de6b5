//! Quadrature and special functions shared by the simulator and tests.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn gl10() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(10))
}

/// 64-point rule mapped to (0, 1): nodes and weights.
pub fn gauss_legendre_unit_64() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| {
        let (x, w) = gauss_legendre(64);
        (
            x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            w.iter().map(|v| 0.5 * v).collect(),
        )
    })
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = gl10();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w).map(|(t, wt)| wt * f(mid + half * t)).sum::<f64>() * half
}

fn adaptive_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, a, m);
    let right = gl_panel(f, m, b);
    let sum = left + right;
    if (sum - whole).abs() <= tol {
        return Ok(sum);
    }
    if depth == 0 {
        return Err(Error::Integration(format!(
            "adaptive quadrature did not converge on [{a}, {b}]"
        )));
    }
    Ok(adaptive_rec(f, a, m, left, 0.5 * tol, depth - 1)?
        + adaptive_rec(f, m, b, right, 0.5 * tol, depth - 1)?)
}

/// Adaptive 10-point Gauss-Legendre quadrature to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let whole = gl_panel(&f, a, b);
    adaptive_rec(&f, a, b, whole, tol, 40)
}

/// `int_{-inf}^{b} f` via `x = b - (1 - s)/s`.
pub fn integrate_lower_tail<F: Fn(f64) -> f64>(f: F, b: f64, tol: f64) -> Result<f64> {
    integrate(
        |s| {
            if s <= 0.0 {
                0.0
            } else {
                let x = b - (1.0 - s) / s;
                let v = f(x) / (s * s);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// `int_{a}^{inf} f` via `x = a + (1 - s)/s`.
pub fn integrate_upper_tail<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<f64> {
    integrate_lower_tail(|x| f(2.0 * a - x), a, tol)
}

/// Exponentially scaled modified Bessel function of the second kind,
/// `exp(z) K_1(z)`, for `z > 0`.
///
/// Uses `K_1(z) = int_0^inf exp(-z cosh t) cosh t dt` and the trapezoid rule,
/// which converges geometrically in the step for this analytic integrand.
pub fn bessel_k1_scaled(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    let h = (0.5 / z.sqrt()).min(0.2);
    // exp(-z (cosh t - 1)) < 1e-19 beyond this point.
    let t_max = (1.0 + 44.0 / z).acosh();
    let n = (t_max / h).ceil() as usize + 1;
    let mut sum = 0.5; // t = 0 term, half weight
    for i in 1..=n {
        let t = i as f64 * h;
        let c = t.cosh();
        let term = (-z * (c - 1.0)).exp() * c;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum * h
}

/// `K_1(z)`.
pub fn bessel_k1(z: f64) -> f64 {
    bessel_k1_scaled(z) * (-z).exp()
}
