//! Brute-force solution of the inspection problem on a uniform mesh.
//!
//! Each outer step solves a discrete obstacle problem
//! `max(-L w - beta pi, w - A w_prev) = 0` with the stopping payoff built from
//! the previous iterate. The generator is discretised with a forward
//! difference for the drift, which keeps the matrix an M-matrix on every mesh,
//! and the obstacle problem is solved by policy iteration.

use serde::Serialize;

use crate::boundary::Solution;
use crate::error::{domain, Error, Result};
use crate::model::{g, ModelParams};
use crate::quadrature::QuadratureConfig;
use crate::value::values;

/// Smallest mesh accepted by [`value_iteration`].
pub const MIN_NODES: usize = 500;

/// Output of [`value_iteration`].
#[derive(Debug, Clone, Serialize)]
pub struct GridValue {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub sup_change: f64,
    /// First node of the stopping set.
    pub boundary_estimate: f64,
    pub boundary_index: usize,
    /// Largest `w_{k+1} - w_k` seen after the first outer step.
    pub max_increase: f64,
    /// Sup-norm change of every outer step.
    pub changes: Vec<f64>,
    /// Stopping payoff of the last outer step.
    pub obstacle: Vec<f64>,
    /// Nodes where stopping is active in the last outer step.
    pub stopping: Vec<bool>,
    #[serde(skip)]
    pub params: ModelParams,
}

impl GridValue {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.grid.len() - 1) as f64
    }

    /// Piecewise-linear interpolant of the grid values.
    pub fn interpolate(&self, pi: f64) -> f64 {
        interpolate(&self.values, pi)
    }
}

fn interpolate(w: &[f64], pi: f64) -> f64 {
    let last = w.len() - 1;
    let s = pi.clamp(0.0, 1.0) * last as f64;
    let i = (s.floor() as usize).min(last - 1);
    let t = s - i as f64;
    w[i] + t * (w[i + 1] - w[i])
}

struct Stencil {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
}

/// Rows of `-L w = beta pi` at the interior nodes and node 0.
fn stencil(params: &ModelParams, n: usize) -> Stencil {
    let h = 1.0 / (n - 1) as f64;
    let (lambda, gamma, beta) = (params.lambda(), params.gamma(), params.beta());
    let mut s = Stencil {
        sub: vec![0.0; n],
        diag: vec![0.0; n],
        sup: vec![0.0; n],
        rhs: vec![0.0; n],
    };
    for i in 0..n - 1 {
        let x = i as f64 * h;
        let spread = x * (1.0 - x);
        let diff = gamma * spread * spread / (h * h);
        let drift = lambda * (1.0 - x) / h;
        s.sub[i] = -diff;
        s.diag[i] = 2.0 * diff + drift;
        s.sup[i] = -diff - drift;
        s.rhs[i] = beta * x;
    }
    s
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
}

/// Solves the discrete obstacle problem by policy iteration, starting from
/// (and updating) the stopping set `stop`.
fn solve_obstacle(st: &Stencil, obstacle: &[f64], terminal: f64, stop: &mut [bool], w: &mut [f64]) -> Result<()> {
    let n = obstacle.len();
    let (mut sub, mut diag, mut sup, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for round in 0..=n {
        for i in 0..n - 1 {
            if stop[i] {
                (sub[i], diag[i], sup[i], rhs[i]) = (0.0, 1.0, 0.0, obstacle[i]);
            } else {
                (sub[i], diag[i], sup[i], rhs[i]) = (st.sub[i], st.diag[i], st.sup[i], st.rhs[i]);
            }
        }
        (sub[n - 1], diag[n - 1], sup[n - 1], rhs[n - 1]) = (0.0, 1.0, 0.0, terminal);
        thomas(&sub, &diag, &sup, &rhs, w);

        let mut changed = false;
        for i in 0..n - 1 {
            let left = if i > 0 { w[i - 1] } else { 0.0 };
            let cont = st.sub[i] * left + st.diag[i] * w[i] + st.sup[i] * w[i + 1] - st.rhs[i];
            let gap = w[i] - obstacle[i];
            let want = if stop[i] { gap >= cont } else { gap > cont };
            if want != stop[i] {
                stop[i] = want;
                changed = true;
            }
        }
        if !changed {
            return Ok(());
        }
        if round == n {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "obstacle policy iteration",
        iterations: n + 1,
        last_change: f64::NAN,
    })
}

/// One outer step: the stopping payoff `1 + (1 - (1 - eps) pi) w(g(pi))`.
fn payoff(w: &[f64], eps: f64, out: &mut [f64]) {
    let h = 1.0 / (w.len() - 1) as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let x = i as f64 * h;
        *o = 1.0 + (1.0 - (1.0 - eps) * x) * interpolate(w, g(x, eps));
    }
}

/// Value iteration for the inspection problem on `n` uniform nodes of `[0, 1]`.
///
/// The start is a constant upper bound of the fixed point, so the iterates
/// decrease monotonically.
pub fn value_iteration(params: &ModelParams, n: usize, tol: f64, max_iter: usize) -> Result<GridValue> {
    if n < MIN_NODES {
        return Err(domain(format!("grid needs at least {MIN_NODES} nodes (got {n})")));
    }
    if !(tol > 0.0) {
        return Err(domain("grid tolerance must be > 0"));
    }
    let eps = params.epsilon();
    let terminal = 1.0 / (1.0 - eps);
    let st = stencil(params, n);
    let mut stop = vec![false; n];
    let mut obstacle = vec![0.0; n];
    let mut next = vec![0.0; n];

    // double a constant start until one step no longer raises it
    let mut level = 2.0 * terminal;
    let mut w = loop {
        let mut w0 = vec![level; n];
        w0[n - 1] = terminal;
        payoff(&w0, eps, &mut obstacle);
        solve_obstacle(&st, &obstacle, terminal, &mut stop, &mut next)?;
        if next.iter().zip(&w0).all(|(a, b)| a <= b) {
            break w0;
        }
        if level > 1e12 {
            return Err(domain("no bounded starting level found for value iteration"));
        }
        level *= 2.0;
    };

    let mut changes = Vec::new();
    let mut max_increase = f64::NEG_INFINITY;
    for it in 1..=max_iter {
        payoff(&w, eps, &mut obstacle);
        solve_obstacle(&st, &obstacle, terminal, &mut stop, &mut next)?;
        let mut change: f64 = 0.0;
        let mut rise = f64::NEG_INFINITY;
        for (a, b) in next.iter().zip(&w) {
            change = change.max((a - b).abs());
            rise = rise.max(a - b);
        }
        if it > 1 {
            max_increase = max_increase.max(rise);
        }
        std::mem::swap(&mut w, &mut next);
        changes.push(change);
        if change <= tol {
            let boundary_index = stop.iter().position(|&s| s).unwrap_or(n - 1);
            let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            return Ok(GridValue {
                boundary_estimate: grid[boundary_index],
                boundary_index,
                grid,
                values: w,
                iterations: it,
                sup_change: change,
                max_increase,
                changes,
                obstacle,
                stopping: stop,
                params: *params,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "grid value iteration",
        iterations: max_iter,
        last_change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

/// Gaps between the grid solution and the closed form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleGap {
    /// `max |w_i - V(pi_i)|` over all nodes.
    pub sup_gap: f64,
    /// `|boundary_estimate - a*|`
    pub boundary_gap: f64,
    /// `boundary_gap` in units of the mesh spacing.
    pub boundary_cells: f64,
}

/// Evaluates the closed-form value at every node and reports the gaps.
pub fn compare_to_closed_form(grid: &GridValue, sol: &Solution, quad: &QuadratureConfig) -> Result<OracleGap> {
    let (a, b) = (grid.params, sol.params);
    if (a.lambda(), a.gamma(), a.beta(), a.epsilon()) != (b.lambda(), b.gamma(), b.beta(), b.epsilon()) {
        return Err(domain("grid and solution were built from different parameters"));
    }
    let exact = values(&grid.grid, sol, quad)?;
    let sup_gap = grid
        .values
        .iter()
        .zip(&exact)
        .map(|(w, v)| (w - v).abs())
        .fold(0.0, f64::max);
    let boundary_gap = (grid.boundary_estimate - sol.a_star).abs();
    Ok(OracleGap {
        sup_gap,
        boundary_gap,
        boundary_cells: boundary_gap / grid.spacing(),
    })
}
