//! The free-boundary equation `F(a) = 0`, its root `a*` and the constant `C`
//! that pins the continuation value `Psi + C` below the boundary.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{decompose, g, IntervalDecomposition, ModelParams, DEFAULT_ETA};
use crate::quadrature::QuadratureConfig;
use crate::specfun::{expected_hitting_time, psi, psi_integral, Psi};

/// Default solver tolerance, applied to both the bracket width and `|F(a*)|`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Left end of the root search; `F > 0` there for every admissible parameter set.
pub const BRACKET_LO: f64 = 1e-6;
/// Right limit of the root search.
pub const BRACKET_HI: f64 = 1.0 - 1e-6;

/// A solved model: the optimal inspection threshold and the constant `C`.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub a_star: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub decomp: IntervalDecomposition,
    pub params: ModelParams,
    /// `|F(a_star)|`
    pub residual: f64,
    pub tol: f64,
}

impl Solution {
    pub fn epsilon(&self) -> f64 {
        self.params.epsilon()
    }

    /// Posterior right after a negative test at the boundary.
    pub fn g_a_star(&self) -> f64 {
        g(self.a_star, self.params.epsilon())
    }

    /// Expected number of inspections from any start at or below the boundary.
    pub fn expected_n_tests(&self) -> f64 {
        1.0 / ((1.0 - self.params.epsilon()) * self.a_star)
    }

    /// Expected time between a negative test and the next test.
    pub fn wait_between_tests(&self, quad: &QuadratureConfig) -> Result<f64> {
        expected_hitting_time(self.g_a_star(), self.a_star, &self.params, quad)
    }

    /// Expected detection time from `pi <= a*`: the first passage to the
    /// boundary plus `E[N_Y] - 1` passages from `g(a*)`.
    pub fn expected_detection_time(&self, pi: f64, quad: &QuadratureConfig) -> Result<f64> {
        if pi > self.a_star {
            return Err(domain(format!(
                "detection-time formula needs pi <= a* = {} (got {pi})",
                self.a_star
            )));
        }
        let first = expected_hitting_time(pi, self.a_star, &self.params, quad)?;
        let wait = self.wait_between_tests(quad)?;
        Ok(first + (self.expected_n_tests() - 1.0) * wait)
    }
}

/// `F(a) = 1 + Psi(g(a)) - g(a) psi(g(a)) - Psi(a) + a psi(a)`.
#[allow(non_snake_case)]
pub fn F(a: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(domain(format!("F is defined on (0, 1) (got {a})")));
    }
    let ga = g(a, params.epsilon());
    let between = psi_integral(ga, a, params, quad)?;
    let psi_a = psi(a, params, quad)?;
    let psi_ga = psi(ga, params, quad)?;
    Ok(1.0 - between + a * psi_a - ga * psi_ga)
}

/// The constant `C` for a given boundary.
///
/// The `eps = 0` branch is the cancelled form of the general expression,
/// which carries a `1 / (1 - eps)` factor.
pub fn constant_for(a: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    let eps = params.epsilon();
    let psi_a = psi(a, params, quad)?;
    let big_psi_a = Psi(a, params, quad)?;
    if eps == 0.0 {
        return Ok(1.0 - (1.0 - a) * psi_a - big_psi_a);
    }
    let psi_ga = psi(g(a, eps), params, quad)?;
    let q = 1.0 - (1.0 - eps) * a;
    Ok(1.0 + eps / (1.0 - eps) * psi_ga - q / (1.0 - eps) * psi_a - big_psi_a)
}

/// Finds `a*` by bisection on `F` (strictly decreasing, `F(0+) = 1`).
pub fn solve_boundary(params: &ModelParams, quad: &QuadratureConfig, tol: f64) -> Result<Solution> {
    quad.validate()?;
    if !(tol > 0.0) {
        return Err(domain("solver tolerance must be > 0"));
    }
    let f = |a: f64| F(a, params, quad);

    let mut lo = BRACKET_LO;
    let mut f_lo = f(lo)?;
    if f_lo <= 0.0 {
        return Err(Error::Bracket {
            lo,
            hi: lo,
            f_lo,
            f_hi: f_lo,
        });
    }
    // expand the right end geometrically toward 1
    let mut gap: f64 = 0.1;
    let (mut hi, mut f_hi) = loop {
        let hi = (1.0 - gap).max(lo).min(BRACKET_HI);
        let f_hi = f(hi)?;
        if f_hi <= 0.0 {
            break (hi, f_hi);
        }
        lo = hi;
        f_lo = f_hi;
        if hi >= BRACKET_HI {
            return Err(Error::Bracket {
                lo: BRACKET_LO,
                hi,
                f_lo,
                f_hi,
            });
        }
        gap *= 0.5;
    };

    let mut best = if f_lo.abs() < f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for _ in 0..200 {
        if (hi - lo <= tol && best.1.abs() <= tol) || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm > 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    // one secant step inside the final bracket
    if f_lo != f_hi {
        let x = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        if x > lo && x < hi {
            let fx = f(x)?;
            if fx.abs() < best.1.abs() {
                best = (x, fx);
            }
        }
    }

    let (a_star, f_star) = best;
    let residual = f_star.abs();
    if residual > tol {
        return Err(Error::NonConvergence {
            what: "free-boundary bisection",
            iterations: 200,
            last_change: residual,
        });
    }
    let c = constant_for(a_star, params, quad)?;
    let decomp = decompose(a_star, params.epsilon(), DEFAULT_ETA)?;
    Ok(Solution {
        a_star,
        c,
        decomp,
        params: *params,
        residual,
        tol,
    })
}

/// Residuals of the two boundary conditions at `a*`:
/// value matching `u(a*) = (Au)(a*)` and smooth fit `u'(a*) = (Au)'(a*)`.
pub fn boundary_gaps(sol: &Solution, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    let p = &sol.params;
    let eps = p.epsilon();
    let a = sol.a_star;
    let ga = sol.g_a_star();
    let q = 1.0 - (1.0 - eps) * a;
    let below_ga = sol.c + Psi(ga, p, quad)?;
    let at_a = sol.c + Psi(a, p, quad)?;
    let psi_a = psi(a, p, quad)?;
    let psi_ga = psi(ga, p, quad)?;
    let value_gap = (at_a - 1.0 - q * below_ga).abs();
    let smooth_gap = (psi_a - (-(1.0 - eps) * below_ga + eps / q * psi_ga)).abs();
    Ok((value_gap, smooth_gap))
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub a_star: f64,
    pub g_a_star: f64,
    pub gap: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

/// Solves the model for every `eps` in `eps_grid`; failures are kept per entry.
pub fn sweep_epsilon(
    base: &ModelParams,
    eps_grid: &[f64],
    quad: &QuadratureConfig,
    tol: f64,
) -> Result<Vec<(f64, Result<Solution>)>> {
    if eps_grid.iter().any(|e| !(0.0..=0.99).contains(e)) {
        return Err(domain("epsilon grid must lie in [0, 0.99]"));
    }
    if eps_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(domain("epsilon grid must be sorted"));
    }
    Ok(eps_grid
        .par_iter()
        .map(|&eps| {
            let sol = base
                .with_epsilon(eps)
                .and_then(|p| solve_boundary(&p, quad, tol));
            (eps, sol)
        })
        .collect())
}

impl From<&Solution> for SweepPoint {
    fn from(sol: &Solution) -> Self {
        let ga = sol.g_a_star();
        SweepPoint {
            epsilon: sol.epsilon(),
            a_star: sol.a_star,
            g_a_star: ga,
            gap: sol.a_star - ga,
            c: sol.c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_limits_and_monotone() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.5, 0.4).unwrap();
        let q = QuadratureConfig::default();
        assert!((F(1e-6, &p, &q).unwrap() - 1.0).abs() < 1e-6);
        assert!(F(0.3, &p, &q).unwrap() > F(0.6, &p, &q).unwrap());
        assert!(F(0.0, &p, &q).is_err());
    }

    #[test]
    fn reference_boundary() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.5, 0.4).unwrap();
        let q = QuadratureConfig::default();
        let sol = solve_boundary(&p, &q, DEFAULT_TOL).unwrap();
        assert!((sol.a_star - 0.792).abs() <= 1e-3, "{}", sol.a_star);
        assert!((sol.g_a_star() - 0.603).abs() <= 1e-3);
        assert!(sol.residual <= sol.tol);
        assert_eq!(sol.decomp.threshold(), sol.a_star);
        assert!(F(0.792, &p, &q).unwrap().abs() <= 1e-3 * 20.0);
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let p = ModelParams::from_gamma(2.0, 0.5, 1.0, 0.0).unwrap();
        let q = QuadratureConfig::default();
        assert!(sweep_epsilon(&p, &[0.5, 0.1], &q, DEFAULT_TOL).is_err());
        assert!(sweep_epsilon(&p, &[0.995], &q, DEFAULT_TOL).is_err());
    }
}
