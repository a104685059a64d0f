//! Adaptive Gauss-Kronrod (7/15) quadrature with global interval bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Tolerances for every integral evaluated by the library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_depth: 60,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(domain("quadrature tolerances must be > 0"));
        }
        if self.max_depth < 10 {
            return Err(domain("quadrature max_depth must be >= 10"));
        }
        Ok(())
    }

    /// Same depth cap, tolerances scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        QuadratureConfig {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            max_depth: self.max_depth,
        }
    }
}

// Kronrod abscissae on [-1, 1] (positive half); odd entries are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F>(f: &mut F, a: f64, b: f64, depth: u32) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx)? + f(center + dx)?;
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    if !value.is_finite() {
        return Err(domain(format!("integrand is not finite on [{a}, {b}]")));
    }
    Ok(Segment {
        a,
        b,
        value,
        error,
        depth,
    })
}

/// Integrates `f` over the partition given by the sorted `points`,
/// bisecting the worst segment until the summed error estimate meets
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate_partitioned<F>(mut f: F, points: &[f64], cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if points.len() < 2 {
        return Ok(0.0);
    }
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in points.windows(2) {
        if w[1] > w[0] {
            let s = kronrod(&mut f, w[0], w[1], 0)?;
            total += s.value;
            total_err += s.error;
            heap.push(s);
        }
    }
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= tol {
            return Ok(total);
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => return Ok(total),
        };
        let mid = 0.5 * (worst.a + worst.b);
        if worst.depth >= cfg.max_depth || mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature {
                a: points[0],
                b: points[points.len() - 1],
                achieved: total_err,
                requested: tol,
            });
        }
        let left = kronrod(&mut f, worst.a, mid, worst.depth + 1)?;
        let right = kronrod(&mut f, mid, worst.b, worst.depth + 1)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        // guard against drift of the running sum below zero
        total_err = total_err.max(0.0);
        heap.push(left);
        heap.push(right);
    }
}

/// Integrates `f` over `[a, b]`; `a > b` flips the sign.
pub fn integrate<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate_partitioned(f, &[b, a], cfg).map(|v| -v);
    }
    integrate_partitioned(f, &[a, b], cfg)
}
