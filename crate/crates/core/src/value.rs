//! The value function built from a [`Solution`], and checks that it solves
//! the free-boundary problem.
//!
//! Below the boundary the value is `Psi(pi) + C`. Above it, every point of
//! `I_k` maps into `I_{k-1}` under `g`, and the value satisfies
//! `V(pi) = 1 + (1 - (1 - eps) pi) V(g(pi))`; unwinding that relation `k`
//! times lands in `I_0`.

use serde::Serialize;

use crate::boundary::{boundary_gaps, solve_boundary, Solution};
use crate::error::{domain, Result};
use crate::model::{g, interval_index, ModelParams};
use crate::quadrature::QuadratureConfig;
use crate::specfun::{psi, psi_integral, psi_prime_from, Psi};

/// Cap on the number of `g` applications when unwinding past the ladder.
pub const MAX_UNWIND: usize = 1_000_000;

/// `(Av)(pi) = 1 + (1 - (1 - eps) pi) v(g(pi))`: one unit for the test plus
/// the value after a negative outcome, weighted by its probability.
pub fn inspection_payoff<F>(mut value_at: F, pi: f64, epsilon: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(0.0..=1.0).contains(&pi) {
        return Err(domain(format!("probability must lie in [0, 1] (got {pi})")));
    }
    let weight = 1.0 - (1.0 - epsilon) * pi;
    Ok(1.0 + weight * value_at(g(pi, epsilon))?)
}

/// A value together with where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValuePoint {
    pub value: f64,
    /// Interval index `k`, `None` past the ladder.
    pub interval: Option<usize>,
    /// Set when the unwinding cap was hit and the tail was anchored at `V(1)`.
    pub approximate: bool,
}

/// Value and first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub u: f64,
    pub du: f64,
    pub d2u: f64,
}

/// `V(pi)` for `pi` in `[0, 1]`.
pub fn value(pi: f64, sol: &Solution, quad: &QuadratureConfig) -> Result<f64> {
    evaluate(pi, sol, quad).map(|v| v.value)
}

/// `V(pi)` with its interval index and tail flag.
pub fn evaluate(pi: f64, sol: &Solution, quad: &QuadratureConfig) -> Result<ValuePoint> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(domain(format!("probability must lie in [0, 1] (got {pi})")));
    }
    let eps = sol.params.epsilon();
    if pi == 1.0 {
        return Ok(ValuePoint {
            value: 1.0 / (1.0 - eps),
            interval: None,
            approximate: false,
        });
    }
    let interval = interval_index(pi, &sol.decomp).ok();
    let unwound = unwind(pi, sol);
    let value = if unwound.approximate {
        unwound.offset + unwound.scale / (1.0 - eps)
    } else {
        unwound.offset + unwound.scale * (Psi(unwound.landing, &sol.params, quad)? + sol.c)
    };
    Ok(ValuePoint {
        value,
        interval,
        approximate: unwound.approximate,
    })
}

/// `V = offset + scale * V(landing)`, with `landing` in `[0, a*)`.
struct Unwound {
    offset: f64,
    scale: f64,
    landing: f64,
    approximate: bool,
}

fn unwind(pi: f64, sol: &Solution) -> Unwound {
    let eps = sol.params.epsilon();
    let (mut offset, mut scale, mut x) = (0.0, 1.0, pi);
    let mut steps = 0;
    while x >= sol.a_star {
        if steps == MAX_UNWIND {
            return Unwound {
                offset,
                scale,
                landing: x,
                approximate: true,
            };
        }
        offset += scale;
        scale *= 1.0 - (1.0 - eps) * x;
        x = g(x, eps);
        steps += 1;
    }
    Unwound {
        offset,
        scale,
        landing: x,
        approximate: false,
    }
}

/// `V` on many points at once. The landing points are sorted and `Psi` is
/// accumulated panel by panel instead of integrating from 0 each time.
pub fn values(points: &[f64], sol: &Solution, quad: &QuadratureConfig) -> Result<Vec<f64>> {
    let eps = sol.params.epsilon();
    let mut out = vec![0.0; points.len()];
    let mut pending = Vec::with_capacity(points.len());
    for (i, &pi) in points.iter().enumerate() {
        if !(0.0..=1.0).contains(&pi) {
            return Err(domain(format!("probability must lie in [0, 1] (got {pi})")));
        }
        if pi == 1.0 {
            out[i] = 1.0 / (1.0 - eps);
            continue;
        }
        let u = unwind(pi, sol);
        if u.approximate {
            out[i] = u.offset + u.scale / (1.0 - eps);
        } else {
            pending.push((u.landing, i, u.offset, u.scale));
        }
    }
    pending.sort_by(|a, b| a.0.total_cmp(&b.0));
    let piece = quad.scaled(1e-3);
    let (mut x_prev, mut big_psi) = (0.0, 0.0);
    for (x, i, offset, scale) in pending {
        if x > x_prev {
            big_psi += psi_integral(x_prev, x, &sol.params, &piece)?;
            x_prev = x;
        }
        out[i] = offset + scale * (big_psi + sol.c);
    }
    Ok(out)
}

/// Value, slope and curvature at `pi` in `[0, 1)`. At a breakpoint this is
/// the right-hand jet.
///
/// Below `a*` this is `(Psi + C, psi, psi')`; above, the recursion is
/// differentiated: `u' = -(1 - eps) u(g) + (eps / q) u'(g)` and
/// `u'' = eps^2 / q^3 u''(g)` with `q = 1 - (1 - eps) pi`.
pub fn jet(pi: f64, sol: &Solution, quad: &QuadratureConfig) -> Result<Jet> {
    if !(0.0..1.0).contains(&pi) {
        return Err(domain(format!("probability must lie in [0, 1) (got {pi})")));
    }
    let eps = sol.params.epsilon();
    let mut chain = Vec::new();
    let mut x = pi;
    while x >= sol.a_star {
        if chain.len() == MAX_UNWIND {
            return Err(domain(format!("{pi} is too close to 1 to unwind")));
        }
        chain.push(x);
        x = g(x, eps);
    }
    let mut j = base_jet(x, sol, quad)?;
    for &y in chain.iter().rev() {
        let q = 1.0 - (1.0 - eps) * y;
        j = Jet {
            u: 1.0 + q * j.u,
            du: -(1.0 - eps) * j.u + eps / q * j.du,
            d2u: eps * eps / (q * q * q) * j.d2u,
        };
    }
    Ok(j)
}

fn base_jet(x: f64, sol: &Solution, quad: &QuadratureConfig) -> Result<Jet> {
    let p = &sol.params;
    let u = Psi(x, p, quad)? + sol.c;
    if x == 0.0 {
        return Ok(Jet {
            u,
            du: 0.0,
            d2u: -p.beta() / p.lambda(),
        });
    }
    let du = psi(x, p, quad)?;
    Ok(Jet {
        u,
        du,
        d2u: psi_prime_from(x, du, p),
    })
}

/// Results of checking the solved value function against every condition
/// of the free-boundary problem on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct ValueDiagnostics {
    /// `max |L u + beta pi|` on `(0, a*)`, with `u''` a central difference of `psi`.
    pub ode_residual_max: f64,
    /// `min (L u)(pi) + beta pi` over `(a*, 1)` off the breakpoints; must be `>= 0`.
    pub variational_min: f64,
    /// `min (Au)(pi) - u(pi)` over `[0, a*)`; must be `>= 0`.
    pub obstacle_gap_min: f64,
    /// `|u'(a*-) - (Au)'(a*)|`
    pub smooth_fit_gap: f64,
    /// `|u(a*) - (Au)(a*)|` with `u = Psi + C`.
    pub value_match_gap: f64,
    /// Grid points where `u''` leaves `(-kappa / (1 - pi), 0)`.
    pub concavity_violations: usize,
    /// Grid points where `u'` leaves `(kappa log(1 - pi), 0)`.
    pub slope_violations: usize,
    pub kappa: f64,
    pub grid_points: usize,
}

/// Finite-difference step and breakpoint clearance used by [`diagnostics`].
pub const DIAG_STEP: f64 = 1e-6;

/// Evaluates every free-boundary condition on a grid of step `grid_step`
/// over `(0, 1 - 10^-3)`.
pub fn diagnostics(sol: &Solution, quad: &QuadratureConfig, grid_step: f64) -> Result<ValueDiagnostics> {
    if !(grid_step > 0.0 && grid_step < 0.5) {
        return Err(domain("grid step must lie in (0, 0.5)"));
    }
    let p = &sol.params;
    let (lambda, gamma, beta, eps) = (p.lambda(), p.gamma(), p.beta(), p.epsilon());
    let a = sol.a_star;
    let kappa = beta / (lambda * (1.0 - a));
    let breaks = sol.decomp.breakpoints();
    let clear = 3.0 * DIAG_STEP;
    let near_break = |x: f64| {
        let i = breaks.partition_point(|&b| b < x);
        (i < breaks.len() && breaks[i] - x < clear) || (i > 0 && x - breaks[i - 1] < clear)
    };
    let generator = |x: f64, du: f64, d2u: f64| {
        let s = x * (1.0 - x);
        lambda * (1.0 - x) * du + gamma * s * s * d2u + beta * x
    };

    let mut d = ValueDiagnostics {
        ode_residual_max: 0.0,
        variational_min: f64::INFINITY,
        obstacle_gap_min: f64::INFINITY,
        smooth_fit_gap: 0.0,
        value_match_gap: 0.0,
        concavity_violations: 0,
        slope_violations: 0,
        kappa,
        grid_points: 0,
    };
    let top = 1.0 - 1e-3;
    let n = (top / grid_step).ceil() as usize;
    for i in 1..n {
        let x = i as f64 * grid_step;
        if x >= top {
            break;
        }
        d.grid_points += 1;
        if near_break(x) {
            continue;
        }
        let j = jet(x, sol, quad)?;
        if !(j.d2u < 0.0 && j.d2u > -kappa / (1.0 - x)) {
            d.concavity_violations += 1;
        }
        if !(j.du < 0.0 && j.du > kappa * (-x).ln_1p()) {
            d.slope_violations += 1;
        }
        if x < a {
            if x + clear < a {
                let fd = (psi(x + DIAG_STEP, p, quad)? - psi(x - DIAG_STEP, p, quad)?)
                    / (2.0 * DIAG_STEP);
                d.ode_residual_max = d.ode_residual_max.max(generator(x, j.du, fd).abs());
            }
            let after_negative = Psi(g(x, eps), p, quad)? + sol.c;
            let payoff = 1.0 + (1.0 - (1.0 - eps) * x) * after_negative;
            d.obstacle_gap_min = d.obstacle_gap_min.min(payoff - j.u);
        } else {
            d.variational_min = d.variational_min.min(generator(x, j.du, j.d2u));
        }
    }
    // (Au - u)(0) = 1 exactly
    d.obstacle_gap_min = d.obstacle_gap_min.min(1.0);
    let (value_gap, smooth_gap) = boundary_gaps(sol, quad)?;
    d.value_match_gap = value_gap;
    d.smooth_fit_gap = smooth_gap;
    Ok(d)
}

/// Checks of the `eps = 0` case against the classical quickest-detection
/// problem with rescaled delay cost `beta / C`.
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalReport {
    pub a_star: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// `|C + psi(a*)|`
    pub c_identity_gap: f64,
    /// `|1 - Psi(a*) + a* psi(a*)|`
    pub boundary_identity_gap: f64,
    pub scaled_beta: f64,
    /// Root `A` of `psi(A) = -1` under the scaled delay cost.
    pub classical_boundary: f64,
    /// `|A - a*|`
    pub boundary_gap: f64,
    /// `max |V(pi) - 1 - C V_C(pi)|` over a grid of `pi`.
    pub affine_gap_max: f64,
}

pub fn classical_reduction_check(params: &ModelParams, quad: &QuadratureConfig) -> Result<ClassicalReport> {
    if params.epsilon() != 0.0 {
        return Err(domain("the classical reduction needs epsilon = 0"));
    }
    let sol = solve_boundary(params, quad, crate::boundary::DEFAULT_TOL)?;
    let a = sol.a_star;
    let c = sol.c;
    let psi_a = psi(a, params, quad)?;
    let c_identity_gap = (c + psi_a).abs();
    let boundary_identity_gap = (1.0 - Psi(a, params, quad)? + a * psi_a).abs();

    // psi is linear in beta, so psi under beta / C is psi / C
    let scaled = params.with_beta(params.beta() / c)?;
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if psi(mid, &scaled, quad)? > -1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let big_a = 0.5 * (lo + hi);

    // classical value: 1 - pi on [A, 1], and 1 - A - int_pi^A psi below
    let mut affine_gap_max: f64 = 0.0;
    for i in 1..20 {
        let x = i as f64 * 0.05;
        let v_classical = if x >= big_a {
            1.0 - x
        } else {
            1.0 - big_a - psi_integral(x, big_a, &scaled, quad)?
        };
        let v = value(x, &sol, quad)?;
        affine_gap_max = affine_gap_max.max((v - 1.0 - c * v_classical).abs());
    }
    Ok(ClassicalReport {
        a_star: a,
        c,
        c_identity_gap,
        boundary_identity_gap,
        scaled_beta: scaled.beta(),
        classical_boundary: big_a,
        boundary_gap: (big_a - a).abs(),
        affine_gap_max,
    })
}
