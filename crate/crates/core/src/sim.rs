//! Monte Carlo simulation of the change point, the observation, the
//! posterior and the inspections under a threshold policy.
//!
//! Every path owns two ChaCha streams derived from `(seed, path index)`: one
//! for the Brownian increments and one for the change point and the test
//! outcomes. Keeping them apart means two runs that differ only in the time
//! step see the same Brownian path (see [`SimConfig::substeps`]).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::boundary::Solution;
use crate::error::{domain, Error, Result};
use crate::model::{g, ModelParams};
use crate::quadrature::QuadratureConfig;

/// Largest censored fraction [`monte_carlo`] accepts.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

/// Tests allowed at a single instant before the path is treated as stuck.
const MAX_TESTS_PER_INSTANT: u64 = 1_000_000;

/// Settings of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub pi0: f64,
    pub dt: f64,
    /// Simulated-time cap per path; `None` means `1000 / lambda`.
    pub horizon_cap: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Brownian increments drawn per time step. A run with `dt` and
    /// `substeps = 2` sums the same normals that a run with `dt / 2` and
    /// `substeps = 1` uses one at a time.
    pub substeps: u32,
}

impl SimConfig {
    pub fn new(pi0: f64, threshold: f64, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            pi0,
            dt: 1e-3,
            horizon_cap: None,
            n_paths,
            seed,
            threshold,
            substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(domain(format!("pi0 must lie in [0, 1] (got {})", self.pi0)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(domain(format!("dt must be > 0 (got {})", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(domain("n_paths must be >= 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(domain(format!(
                "threshold must lie in (0, 1) (got {})",
                self.threshold
            )));
        }
        if let Some(cap) = self.horizon_cap {
            if !(cap > 0.0) {
                return Err(domain(format!("horizon cap must be > 0 (got {cap})")));
            }
        }
        if self.substeps == 0 {
            return Err(domain("substeps must be >= 1"));
        }
        Ok(())
    }

    pub fn horizon(&self, params: &ModelParams) -> f64 {
        self.horizon_cap.unwrap_or(1e3 / params.lambda())
    }
}

/// The two random streams of one path.
pub struct PathRng {
    noise: ChaCha8Rng,
    events: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        noise.set_stream(2 * path);
        let mut events = ChaCha8Rng::seed_from_u64(seed);
        events.set_stream(2 * path + 1);
        PathRng { noise, events }
    }
}

/// One test: when it happened, the posterior just before it and its outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inspection {
    pub time: f64,
    pub posterior: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub theta: f64,
    pub n_tests: u64,
    pub tau_detect: f64,
    /// `n_tests + beta (tau_detect - theta)^+`
    pub cost: f64,
    pub inspections: Vec<Inspection>,
    /// The path hit the time cap before a positive test.
    pub censored: bool,
    /// Largest distance the posterior left `[0, 1]` before clamping.
    pub clamp_excursion: f64,
}

/// A point of a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub pi: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Step,
    NegativeTest,
    PositiveTest,
    Reset,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Step => "step",
            TraceEvent::NegativeTest => "negative_test",
            TraceEvent::PositiveTest => "positive_test",
            TraceEvent::Reset => "reset",
        }
    }
}

/// Change point: 0 with probability `pi0`, otherwise exponential with rate `lambda`.
pub fn sample_theta<R: Rng + ?Sized>(pi0: f64, lambda: f64, rng: &mut R) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi0) {
        return Err(domain(format!("pi0 must lie in [0, 1] (got {pi0})")));
    }
    let exp = Exp::new(lambda).map_err(|e| domain(format!("lambda: {e}")))?;
    let u: f64 = rng.random();
    if u < pi0 {
        Ok(0.0)
    } else {
        Ok(rng.sample(exp))
    }
}

/// Simulates one path until the first positive test or the time cap.
pub fn simulate_path(params: &ModelParams, config: &SimConfig, rng: &mut PathRng) -> Result<PathOutcome> {
    let theta = sample_theta(config.pi0, params.lambda(), &mut rng.events)?;
    run(params, config, theta, rng, None)
}

/// Same as [`simulate_path`] with the change point fixed.
pub fn simulate_path_given_theta(
    params: &ModelParams,
    config: &SimConfig,
    theta: f64,
    rng: &mut PathRng,
) -> Result<PathOutcome> {
    if !(theta >= 0.0) {
        return Err(domain(format!("change point must be >= 0 (got {theta})")));
    }
    run(params, config, theta, rng, None)
}

/// Simulates one path and records the posterior at every step and test.
/// `theta` fixes the change point; `None` draws it from the prior.
pub fn simulate_trace(
    params: &ModelParams,
    config: &SimConfig,
    theta: Option<f64>,
    rng: &mut PathRng,
) -> Result<(PathOutcome, Vec<TracePoint>)> {
    let theta = match theta {
        Some(t) if !(t >= 0.0) => return Err(domain(format!("change point must be >= 0 (got {t})"))),
        Some(t) => t,
        None => sample_theta(config.pi0, params.lambda(), &mut rng.events)?,
    };
    let mut trace = Vec::new();
    let out = run(params, config, theta, rng, Some(&mut trace))?;
    Ok((out, trace))
}

fn run(
    params: &ModelParams,
    config: &SimConfig,
    theta: f64,
    rng: &mut PathRng,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> Result<PathOutcome> {
    config.validate()?;
    let (lambda, mu, sigma, beta, eps) = (
        params.lambda(),
        params.mu(),
        params.sigma(),
        params.beta(),
        params.epsilon(),
    );
    let gain = mu / (sigma * sigma);
    let fine = config.dt / config.substeps as f64;
    let fine_sd = sigma * fine.sqrt();
    let max_steps = (config.horizon(params) / config.dt).ceil() as u64;

    let mut pi = config.pi0;
    let mut inspections = Vec::new();
    let mut excursion: f64 = 0.0;
    let mut step: u64 = 0;
    let record = |trace: &mut Option<&mut Vec<TracePoint>>, t, pi, event| {
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TracePoint { t, pi, event });
        }
    };
    loop {
        let t = step as f64 * config.dt;
        record(&mut trace, t, pi, TraceEvent::Step);
        let mut at_instant = 0;
        while pi >= config.threshold {
            at_instant += 1;
            if at_instant > MAX_TESTS_PER_INSTANT {
                break;
            }
            let u: f64 = rng.events.random();
            let positive = theta <= t && u <= 1.0 - eps;
            inspections.push(Inspection {
                time: t,
                posterior: pi,
                positive,
            });
            if positive {
                record(&mut trace, t, pi, TraceEvent::PositiveTest);
                let n_tests = inspections.len() as u64;
                return Ok(PathOutcome {
                    theta,
                    n_tests,
                    tau_detect: t,
                    cost: n_tests as f64 + beta * (t - theta).max(0.0),
                    inspections,
                    censored: false,
                    clamp_excursion: excursion,
                });
            }
            record(&mut trace, t, pi, TraceEvent::NegativeTest);
            pi = g(pi, eps);
            record(&mut trace, t, pi, TraceEvent::Reset);
        }
        if step >= max_steps || at_instant > MAX_TESTS_PER_INSTANT {
            let n_tests = inspections.len() as u64;
            return Ok(PathOutcome {
                theta,
                n_tests,
                tau_detect: t,
                cost: n_tests as f64 + beta * (t - theta).max(0.0),
                inspections,
                censored: true,
                clamp_excursion: excursion,
            });
        }

        // observation increment over [t, t + dt]: drift only after theta
        let t_next = (step + 1) as f64 * config.dt;
        let active = (t_next - theta.max(t)).max(0.0);
        let mut dx = mu * active;
        for _ in 0..config.substeps {
            let z: f64 = rng.noise.sample(StandardNormal);
            dx += fine_sd * z;
        }
        let raw = pi
            + lambda * (1.0 - pi) * config.dt
            + gain * pi * (1.0 - pi) * (dx - mu * pi * config.dt);
        excursion = excursion.max(-raw).max(raw - 1.0);
        pi = raw.clamp(0.0, 1.0);
        step += 1;
    }
}

/// Aggregate of a Monte Carlo run over the uncensored paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n_paths: usize,
    pub censored: usize,
    pub mean_cost: f64,
    pub stderr_cost: f64,
    pub mean_n_tests: f64,
    pub stderr_n_tests: f64,
    pub mean_tau_detect: f64,
    pub stderr_tau_detect: f64,
    /// Entry `k` counts paths with `k + 1` tests.
    pub n_tests_histogram: Vec<u64>,
    /// Tests performed at or after the change point.
    pub tests_after_change: u64,
    /// Negative outcomes among those.
    pub false_negatives: u64,
    /// Positive outcomes before the change point (zero by construction).
    pub positives_before_change: u64,
    pub max_clamp_excursion: f64,
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulates `config.n_paths` independent paths in parallel and summarises
/// them. Results are identical for any number of worker threads.
pub fn simulate_many(params: &ModelParams, config: &SimConfig) -> Result<Vec<PathOutcome>> {
    config.validate()?;
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(params, config, &mut PathRng::new(config.seed, i)))
        .collect()
}

/// Summary statistics of a set of paths.
pub fn summarize(paths: &[PathOutcome]) -> McSummary {
    let done: Vec<&PathOutcome> = paths.iter().filter(|p| !p.censored).collect();
    let (mean_cost, stderr_cost) = mean_stderr(done.iter().map(|p| p.cost));
    let (mean_n_tests, stderr_n_tests) = mean_stderr(done.iter().map(|p| p.n_tests as f64));
    let (mean_tau_detect, stderr_tau_detect) = mean_stderr(done.iter().map(|p| p.tau_detect));
    let longest = done.iter().map(|p| p.n_tests).max().unwrap_or(0) as usize;
    let mut n_tests_histogram = vec![0; longest];
    for p in &done {
        n_tests_histogram[p.n_tests as usize - 1] += 1;
    }
    let (mut after, mut negatives, mut early_positive) = (0, 0, 0);
    for p in paths {
        for t in &p.inspections {
            if t.time >= p.theta {
                after += 1;
                if !t.positive {
                    negatives += 1;
                }
            } else if t.positive {
                early_positive += 1;
            }
        }
    }
    McSummary {
        n_paths: paths.len(),
        censored: paths.len() - done.len(),
        mean_cost,
        stderr_cost,
        mean_n_tests,
        stderr_n_tests,
        mean_tau_detect,
        stderr_tau_detect,
        n_tests_histogram,
        tests_after_change: after,
        false_negatives: negatives,
        positives_before_change: early_positive,
        max_clamp_excursion: paths.iter().map(|p| p.clamp_excursion).fold(0.0, f64::max),
    }
}

/// Runs the threshold policy of `sol` and summarises the paths.
///
/// Fails when more than [`MAX_CENSORED_FRACTION`] of the paths hit the time cap.
pub fn monte_carlo(sol: &Solution, config: &SimConfig) -> Result<McSummary> {
    if config.threshold != sol.a_star {
        return Err(domain(format!(
            "threshold {} differs from the solved boundary {}",
            config.threshold, sol.a_star
        )));
    }
    let paths = simulate_many(&sol.params, config)?;
    let summary = summarize(&paths);
    check_censoring(&summary, config, &sol.params)?;
    Ok(summary)
}

pub fn check_censoring(summary: &McSummary, config: &SimConfig, params: &ModelParams) -> Result<()> {
    if summary.censored as f64 > MAX_CENSORED_FRACTION * summary.n_paths as f64 {
        return Err(Error::Censored {
            censored: summary.censored,
            paths: summary.n_paths,
            limit: config.horizon(params),
        });
    }
    Ok(())
}

/// Chi-square goodness of fit of a test-count histogram against the
/// geometric law with success probability `p` on `{1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Cells with expected count below 5 are merged into the tail cell.
pub fn geometric_fit(histogram: &[u64], p: f64) -> Result<GeometricFit> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain(format!("success probability must lie in (0, 1] (got {p})")));
    }
    let n: u64 = histogram.iter().sum();
    if n == 0 {
        return Err(domain("empty histogram"));
    }
    let n = n as f64;
    let mut statistic = 0.0;
    let mut cells = 0;
    let mut tail_prob = 1.0;
    let mut k = 0;
    loop {
        let prob = p * (1.0 - p).powi(k as i32);
        let remaining = tail_prob - prob;
        if n * prob < 5.0 || n * remaining < 5.0 {
            break;
        }
        let observed = histogram.get(k).copied().unwrap_or(0) as f64;
        statistic += (observed - n * prob).powi(2) / (n * prob);
        tail_prob = remaining;
        cells += 1;
        k += 1;
    }
    let observed_tail: u64 = histogram.iter().skip(k).sum();
    let expected_tail = n * tail_prob;
    statistic += (observed_tail as f64 - expected_tail).powi(2) / expected_tail;
    cells += 1;
    if cells < 2 {
        return Err(domain("too few cells for a chi-square test"));
    }
    let dof = cells - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| domain(e.to_string()))?;
    Ok(GeometricFit {
        statistic,
        dof,
        p_value: chi.sf(statistic),
    })
}

/// Simulated against analytic mean detection time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionReport {
    pub empirical: f64,
    pub stderr: f64,
    pub analytic: f64,
    /// `(empirical - analytic) / stderr`
    pub z_score: f64,
    pub mean_n_tests: f64,
    pub expected_n_tests: f64,
}

pub fn detection_time_check(sol: &Solution, config: &SimConfig, quad: &QuadratureConfig) -> Result<DetectionReport> {
    if config.pi0 > sol.a_star {
        return Err(domain(format!(
            "detection-time formula needs pi0 <= a* = {} (got {})",
            sol.a_star, config.pi0
        )));
    }
    let summary = monte_carlo(sol, config)?;
    let analytic = sol.expected_detection_time(config.pi0, quad)?;
    Ok(DetectionReport {
        empirical: summary.mean_tau_detect,
        stderr: summary.stderr_tau_detect,
        analytic,
        z_score: (summary.mean_tau_detect - analytic) / summary.stderr_tau_detect,
        mean_n_tests: summary.mean_n_tests,
        expected_n_tests: sol.expected_n_tests(),
    })
}
