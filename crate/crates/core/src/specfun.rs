//! Scale and cost functions of the posterior diffusion.
//!
//! With `h(pi) = rho (log(pi / (1 - pi)) - 1 / pi)` the building blocks are
//!
//! ```text
//! psi(pi) = -(beta / gamma) e^{-h(pi)} int_0^pi e^{h(x)} / (x (1 - x)^2) dx
//! chi(pi) = -(1 / gamma)    e^{-h(pi)} int_0^pi e^{h(x)} / (x^2 (1 - x)^2) dx
//! Psi(pi) = int_0^pi psi(x) dx
//! ```
//!
//! `psi` is the derivative of the continuation value below the boundary and
//! `chi` the derivative of the expected hitting time of a level. The factor
//! `e^{h(x)}` alone overflows near 1 and underflows near 0, so every
//! integrand carries `e^{h(x) - h(pi)}`, whose exponent is never positive.

use crate::error::{domain, Result};
use crate::model::ModelParams;
use crate::quadrature::{integrate, integrate_partitioned, QuadratureConfig};

/// `h(pi) = rho (log(pi / (1 - pi)) - 1 / pi)`, strictly increasing on `(0, 1)`.
pub fn h(pi: f64, params: &ModelParams) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(domain(format!("h is defined on (0, 1) only (got {pi})")));
    }
    Ok(params.rho() * ((pi / (1.0 - pi)).ln() - 1.0 / pi))
}

/// `h(x) - h(pi)` for `0 < x <= pi < 1`, arranged to avoid overflow.
#[inline]
fn h_gap(x: f64, pi: f64, rho: f64) -> f64 {
    let log_odds = (x / pi).ln() - ((-x).ln_1p() - (-pi).ln_1p());
    let recip = (pi - x) / (x * pi);
    (rho * (log_odds - recip)).min(0.0)
}

/// Partition of `[0, pi]` graded toward `pi` on the decay scale
/// `1 / h'(pi)` of `e^{h(x) - h(pi)}`.
fn graded_points(pi: f64, rho: f64) -> Vec<f64> {
    let width = pi * pi * (1.0 - pi) / rho;
    let mut pts = vec![pi];
    let mut d = width;
    while d < pi {
        pts.push(pi - d);
        d *= 4.0;
    }
    pts.push(0.0);
    pts.reverse();
    pts
}

fn check_open_left(pi: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&pi) {
        return Err(domain(format!("{what} is defined on [0, 1) (got {pi})")));
    }
    Ok(())
}

/// `psi(pi)`; `psi(0) = 0` and `psi < 0` on `(0, 1)`.
pub fn psi(pi: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    check_open_left(pi, "psi")?;
    if pi == 0.0 {
        return Ok(0.0);
    }
    let rho = params.rho();
    let integrand = |x: f64| {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let one_minus = 1.0 - x;
        Ok(h_gap(x, pi, rho).exp() / (x * one_minus * one_minus))
    };
    let integral = integrate_partitioned(integrand, &graded_points(pi, rho), quad)?;
    Ok(-params.beta() / params.gamma() * integral)
}

/// `psi'(pi) = -(beta pi + lambda (1 - pi) psi(pi)) / (gamma pi^2 (1 - pi)^2)`,
/// which is the continuation ODE solved for the second derivative.
pub fn psi_prime(pi: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(domain(format!("psi' is defined on (0, 1) (got {pi})")));
    }
    let p = psi(pi, params, quad)?;
    Ok(psi_prime_from(pi, p, params))
}

/// The same identity given a precomputed `psi(pi)`.
pub fn psi_prime_from(pi: f64, psi_at_pi: f64, params: &ModelParams) -> f64 {
    let s = pi * (1.0 - pi);
    -(params.beta() * pi + params.lambda() * (1.0 - pi) * psi_at_pi) / (params.gamma() * s * s)
}

/// `Psi(pi) = int_0^pi psi(x) dx`, by nested quadrature.
#[allow(non_snake_case)]
pub fn Psi(pi: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    check_open_left(pi, "Psi")?;
    psi_integral(0.0, pi, params, quad)
}

/// `int_lo^hi psi(x) dx` for `0 <= lo, hi < 1`.
pub fn psi_integral(lo: f64, hi: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    check_open_left(lo, "Psi")?;
    check_open_left(hi, "Psi")?;
    let inner = quad.scaled(0.1);
    integrate(|x| psi(x, params, &inner), lo, hi, quad)
}

/// `chi(pi)`; its limit at 0 is `-1 / lambda`.
pub fn chi(pi: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    check_open_left(pi, "chi")?;
    if pi == 0.0 {
        return Ok(-1.0 / params.lambda());
    }
    let rho = params.rho();
    let integrand = |x: f64| {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let s = x * (1.0 - x);
        Ok(h_gap(x, pi, rho).exp() / (s * s))
    };
    let integral = integrate_partitioned(integrand, &graded_points(pi, rho), quad)?;
    Ok(-integral / params.gamma())
}

/// Expected time for the posterior diffusion started at `pi` to reach `a`:
/// `-int_pi^a chi(x) dx`.
pub fn expected_hitting_time(
    pi: f64,
    a: f64,
    params: &ModelParams,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_open_left(a, "expected hitting time")?;
    if !(0.0..=a).contains(&pi) {
        return Err(domain(format!(
            "start must lie in [0, a] = [0, {a}] (got {pi})"
        )));
    }
    let inner = quad.scaled(0.1);
    let v = integrate(|x| chi(x, params, &inner), pi, a, quad)?;
    Ok(-v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64) -> ModelParams {
        ModelParams::from_gamma(2.0, 0.5, beta, 0.0).unwrap()
    }

    #[test]
    fn h_values() {
        let p = params(1.0);
        assert!((h(0.5, &p).unwrap() + 2.0 * p.rho()).abs() < 1e-14);
        assert!(h(0.3, &p).unwrap() < h(0.6, &p).unwrap());
        assert!(h(1e-6, &p).unwrap() < -1e6);
        assert!(h(1.0 - 1e-12, &p).unwrap() > 100.0);
        assert!(h(0.0, &p).is_err());
        assert!(h(1.0, &p).is_err());
    }

    #[test]
    fn graded_partition_is_sorted() {
        let pts = graded_points(0.3, 4.0);
        assert_eq!(pts[0], 0.0);
        assert_eq!(*pts.last().unwrap(), 0.3);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        // wide kernel: a single panel
        assert_eq!(graded_points(0.5, 0.01), vec![0.0, 0.5]);
    }

    #[test]
    fn psi_edge_values() {
        let p = params(1.0);
        let q = QuadratureConfig::default();
        assert_eq!(psi(0.0, &p, &q).unwrap(), 0.0);
        assert!(psi(0.5, &p, &q).unwrap() < 0.0);
        assert!(psi(1.0, &p, &q).is_err());
        assert!(psi(-0.1, &p, &q).is_err());
        // psi ~ -(beta / lambda) pi near 0
        let small = psi(1e-4, &p, &q).unwrap();
        assert!((small / 1e-4 + 0.5).abs() < 1e-3);
    }

    #[test]
    fn psi_tail_limit() {
        // (1 - pi) psi(pi) -> -beta / (lambda + gamma)
        let p = params(1.0);
        let q = QuadratureConfig::default();
        let pi = 1.0 - 1e-4;
        let v = (1.0 - pi) * psi(pi, &p, &q).unwrap();
        assert!((v + 0.4).abs() < 0.004, "{v}");
    }

    #[test]
    fn chi_limits() {
        let p = params(1.0);
        let q = QuadratureConfig::default();
        assert_eq!(chi(0.0, &p, &q).unwrap(), -0.5);
        assert!((chi(1e-5, &p, &q).unwrap() + 0.5).abs() < 1e-4);
        assert!(chi(0.5, &p, &q).unwrap() < 0.0);
    }

    #[test]
    fn hitting_time_basics() {
        let p = params(1.0);
        let q = QuadratureConfig::default();
        assert_eq!(expected_hitting_time(0.4, 0.4, &p, &q).unwrap(), 0.0);
        assert!(expected_hitting_time(0.5, 0.4, &p, &q).is_err());
        let t: Vec<f64> = [0.3, 0.5, 0.7]
            .iter()
            .map(|&a| expected_hitting_time(0.0, a, &p, &q).unwrap())
            .collect();
        assert!(t[0] > 0.0 && t[0] < t[1] && t[1] < t[2]);
    }

    #[test]
    fn psi_integral_decreasing() {
        let p = params(1.0);
        let q = QuadratureConfig::default();
        assert_eq!(Psi(0.0, &p, &q).unwrap(), 0.0);
        assert!(Psi(0.6, &p, &q).unwrap() < Psi(0.3, &p, &q).unwrap());
    }
}
