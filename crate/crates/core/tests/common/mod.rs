//! Reference evaluations that share no code with the library.
//!
//! With `t = h(x) - h(pi)` the scale integrals become integrals of bounded,
//! smooth functions over `(-inf, 0]` weighted by `e^t`:
//!
//! ```text
//! psi(pi) = -(beta / lambda) int e^t x(t) / (1 - x(t)) dt
//! chi(pi) = -(1 / lambda)    int e^t / (1 - x(t)) dt
//! ```
//!
//! where `x(t)` inverts `h`. These are evaluated with a composite Simpson
//! rule on `[-T, 0]`; `h` is inverted by bisection.

#![allow(dead_code)]

use quickdetect::model::ModelParams;

pub const CUTOFF: f64 = 40.0;

pub fn h(x: f64, rho: f64) -> f64 {
    rho * ((x / (1.0 - x)).ln() - 1.0 / x)
}

/// `x` in `(0, 1)` with `h(x) = y`.
pub fn h_inverse(y: f64, rho: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid, rho) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let step = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * step);
    }
    sum * step / 3.0
}

fn substituted(pi: f64, p: &ModelParams, panels: usize, weight: impl Fn(f64) -> f64) -> f64 {
    let rho = p.lambda() / p.gamma();
    let top = h(pi, rho);
    simpson(
        |t| {
            let x = if t == 0.0 { pi } else { h_inverse(top + t, rho) };
            t.exp() * weight(x)
        },
        -CUTOFF,
        0.0,
        panels,
    )
}

pub fn psi(pi: f64, p: &ModelParams, panels: usize) -> f64 {
    if pi == 0.0 {
        return 0.0;
    }
    -p.beta() / p.lambda() * substituted(pi, p, panels, |x| x / (1.0 - x))
}

pub fn chi(pi: f64, p: &ModelParams, panels: usize) -> f64 {
    if pi == 0.0 {
        return -1.0 / p.lambda();
    }
    -substituted(pi, p, panels, |x| 1.0 / (1.0 - x)) / p.lambda()
}

/// `int_0^pi psi` by Simpson over the reference `psi`.
#[allow(non_snake_case)]
pub fn Psi(pi: f64, p: &ModelParams, outer: usize, inner: usize) -> f64 {
    simpson(|x| psi(x, p, inner), 0.0, pi, outer)
}

pub fn unit_delay(eps: f64) -> ModelParams {
    ModelParams::from_gamma(2.0, 0.5, 1.0, eps).unwrap()
}

pub fn base_case() -> ModelParams {
    ModelParams::new(2.0, 1.0, 1.0, 1.5, 0.4).unwrap()
}
