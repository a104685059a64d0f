//! The `quickdetect` command line.
//!
//! Commands write JSON or CSV to standard output or `--output`. Exit codes:
//! 0 success, 2 bad arguments, 3 solver failure, 4 too many censored
//! simulation paths.

pub mod config;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use quickdetect::boundary::{solve_boundary, sweep_epsilon, Solution, SweepPoint, DEFAULT_TOL};
use quickdetect::error::Error;
use quickdetect::model::interval_index;
use quickdetect::quadrature::QuadratureConfig;
use quickdetect::sim::{check_censoring, simulate_many, simulate_trace, summarize, McSummary, PathRng, SimConfig};
use quickdetect::value::{value, values};

use config::{parse_grid, Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;

pub const VALUE_HEADER: [&str; 4] = ["pi", "value", "region", "interval_index"];
pub const SWEEP_HEADER: [&str; 10] = [
    "beta",
    "eps",
    "a_star",
    "g_a_star",
    "gap",
    "C",
    "expected_n_tests",
    "wait_between_tests",
    "expected_detection_time",
    "error",
];
pub const TRACE_HEADER: [&str; 3] = ["t", "pi", "event"];

#[derive(Parser, Debug)]
#[command(name = "quickdetect", version, about = "Quickest detection with false-negative inspections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the optimal inspection threshold.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate the value function on a grid of probabilities.
    Value {
        #[command(flatten)]
        common: Common,
        /// `start:step:stop` or a comma-separated list (default 0:0.01:1).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Solve over a grid of epsilon for one or more delay costs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated delay costs; defaults to `--beta`.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        /// `start:step:stop` or a comma-separated list (default 0:0.1:0.9).
        #[arg(long)]
        eps_grid: Option<String>,
        /// Starting probability for the detection-time column (default 0).
        #[arg(long)]
        pi0: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Monte Carlo run of the threshold policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pi0: Option<f64>,
        /// Inspection threshold (default: the solved boundary).
        #[arg(long)]
        threshold: Option<f64>,
        /// Time cap per path (default 1000 / lambda).
        #[arg(long)]
        horizon: Option<f64>,
        /// Write one path's trajectory as CSV instead of the summary.
        #[arg(long)]
        trace: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Signal-to-noise rate; sets mu = sqrt(2 gamma), sigma = 1.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Boundary solver tolerance (default 1e-10).
    #[arg(long)]
    tol: Option<f64>,
    /// JSON file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print the merged settings as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

impl Common {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            lambda: self.lambda,
            mu: self.mu,
            sigma: self.sigma,
            gamma: self.gamma,
            beta: self.beta,
            eps: self.eps,
            tol: self.tol,
            output: self.output.clone(),
            ..Default::default()
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) => EXIT_USAGE,
            Error::Censored { .. } => EXIT_SIMULATION,
            _ => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Text form used in CSV cells.
pub fn fmt12(x: f64) -> String {
    format!("{}", sig12(x))
}

/// Runs the command line `args` (program name first). Output goes to `out`
/// unless `--output` is given; diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let (common, flags) = match &cli.command {
        Command::Solve { common } => (common, common.to_config()),
        Command::Value { common, grid, format } => (
            common,
            RunConfig {
                grid: grid.clone(),
                format: *format,
                ..common.to_config()
            },
        ),
        Command::Sweep {
            common,
            betas,
            eps_grid,
            pi0,
            format,
        } => (
            common,
            RunConfig {
                betas: betas.clone(),
                eps_grid: eps_grid.clone(),
                pi0: *pi0,
                format: *format,
                ..common.to_config()
            },
        ),
        Command::Simulate {
            common,
            paths,
            dt,
            seed,
            pi0,
            threshold,
            horizon,
            trace,
            threads,
        } => (
            common,
            RunConfig {
                paths: *paths,
                dt: *dt,
                seed: *seed,
                pi0: *pi0,
                threshold: *threshold,
                horizon: *horizon,
                trace: trace.then_some(true),
                threads: *threads,
                ..common.to_config()
            },
        ),
    };
    let file = match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    let cfg = flags.over(file);

    let mut sink: Box<dyn Write + '_> = match &cfg.output {
        Some(path) => Box::new(io::BufWriter::new(File::create(path)?)),
        None => Box::new(out),
    };
    if common.print_config {
        serde_json::to_writer_pretty(&mut sink, &cfg).map_err(io::Error::from)?;
        writeln!(sink)?;
        return Ok(());
    }
    match cli.command {
        Command::Solve { .. } => cmd_solve(&cfg, &mut sink),
        Command::Value { .. } => cmd_value(&cfg, &mut sink),
        Command::Sweep { .. } => cmd_sweep(&cfg, &mut sink),
        Command::Simulate { .. } => cmd_simulate(&cfg, &mut sink),
    }?;
    sink.flush()?;
    Ok(())
}

fn tolerance(cfg: &RunConfig) -> Result<f64, Failure> {
    let tol = cfg.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Failure::usage(format!("--tol must be > 0 (got {tol})")));
    }
    Ok(tol)
}

fn solve(cfg: &RunConfig) -> Result<Solution, Failure> {
    let params = cfg.params().map_err(Failure::usage)?;
    Ok(solve_boundary(&params, &QuadratureConfig::default(), tolerance(cfg)?)?)
}

fn write_json<T: Serialize>(sink: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *sink, value).map_err(io::Error::from)?;
    writeln!(sink)?;
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    a_star: f64,
    #[serde(rename = "C")]
    c: f64,
    residual: f64,
    g_a_star: f64,
    expected_n_tests: f64,
}

fn cmd_solve(cfg: &RunConfig, sink: &mut dyn Write) -> Result<(), Failure> {
    let sol = solve(cfg)?;
    write_json(
        sink,
        &SolveReport {
            a_star: sig12(sol.a_star),
            c: sig12(sol.c),
            residual: sig12(sol.residual),
            g_a_star: sig12(sol.g_a_star()),
            expected_n_tests: sig12(sol.expected_n_tests()),
        },
    )
}

#[derive(Serialize)]
struct ValueRow {
    pi: f64,
    value: f64,
    region: &'static str,
    interval_index: Option<usize>,
}

fn cmd_value(cfg: &RunConfig, sink: &mut dyn Write) -> Result<(), Failure> {
    let grid = parse_grid(cfg.grid.as_deref().unwrap_or("0:0.01:1")).map_err(Failure::usage)?;
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Failure::usage("grid points must lie in [0, 1]"));
    }
    let sol = solve(cfg)?;
    let vals = values(&grid, &sol, &QuadratureConfig::default())?;
    let rows: Vec<ValueRow> = grid
        .iter()
        .zip(&vals)
        .map(|(&pi, &v)| ValueRow {
            pi: sig12(pi),
            value: sig12(v),
            region: if pi < sol.a_star { "continue" } else { "stop" },
            interval_index: if pi < 1.0 {
                interval_index(pi, &sol.decomp).ok()
            } else {
                None
            },
        })
        .collect();
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(sink, &rows),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(VALUE_HEADER)?;
            for r in &rows {
                let k = r.interval_index.map(|k| k.to_string()).unwrap_or_default();
                w.write_record([fmt12(r.pi), fmt12(r.value), r.region.to_string(), k])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    beta: f64,
    eps: f64,
    a_star: Option<f64>,
    g_a_star: Option<f64>,
    gap: Option<f64>,
    #[serde(rename = "C")]
    c: Option<f64>,
    expected_n_tests: Option<f64>,
    wait_between_tests: Option<f64>,
    expected_detection_time: Option<f64>,
    error: Option<String>,
}

fn sweep_row(beta: f64, eps: f64, sol: Result<Solution, Error>, pi0: f64, quad: &QuadratureConfig) -> SweepRow {
    let mut row = SweepRow {
        beta,
        eps,
        a_star: None,
        g_a_star: None,
        gap: None,
        c: None,
        expected_n_tests: None,
        wait_between_tests: None,
        expected_detection_time: None,
        error: None,
    };
    let sol = match sol {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let point = SweepPoint::from(&sol);
    row.a_star = Some(sig12(point.a_star));
    row.g_a_star = Some(sig12(point.g_a_star));
    row.gap = Some(sig12(point.gap));
    row.c = Some(sig12(point.c));
    row.expected_n_tests = Some(sig12(sol.expected_n_tests()));
    match sol.wait_between_tests(quad) {
        Ok(w) => row.wait_between_tests = Some(sig12(w)),
        Err(e) => row.error = Some(e.to_string()),
    }
    match sol.expected_detection_time(pi0.min(sol.a_star), quad) {
        Ok(t) => row.expected_detection_time = Some(sig12(t)),
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn cmd_sweep(cfg: &RunConfig, sink: &mut dyn Write) -> Result<(), Failure> {
    let betas = match (&cfg.betas, cfg.beta) {
        (Some(b), _) => b.clone(),
        (None, Some(b)) => vec![b],
        (None, None) => return Err(Failure::usage("missing --betas or --beta")),
    };
    let eps_grid = parse_grid(cfg.eps_grid.as_deref().unwrap_or("0:0.1:0.9")).map_err(Failure::usage)?;
    let pi0 = cfg.pi0.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Failure::usage(format!("--pi0 must lie in [0, 1] (got {pi0})")));
    }
    let quad = QuadratureConfig::default();
    let tol = tolerance(cfg)?;
    // any epsilon works here; the sweep replaces it
    let probe = RunConfig {
        eps: Some(cfg.eps.unwrap_or(0.0)),
        ..cfg.clone()
    };
    let mut rows = Vec::new();
    for &beta in &betas {
        let base = probe.params_with_beta(beta).map_err(Failure::usage)?;
        for (eps, sol) in sweep_epsilon(&base, &eps_grid, &quad, tol)? {
            rows.push(sweep_row(beta, eps, sol, pi0, &quad));
        }
    }
    let any_ok = rows.iter().any(|r| r.a_star.is_some());
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(sink, &rows)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *sink);
            w.write_record(SWEEP_HEADER)?;
            let cell = |x: Option<f64>| x.map(fmt12).unwrap_or_default();
            for r in &rows {
                w.write_record([
                    fmt12(r.beta),
                    fmt12(r.eps),
                    cell(r.a_star),
                    cell(r.g_a_star),
                    cell(r.gap),
                    cell(r.c),
                    cell(r.expected_n_tests),
                    cell(r.wait_between_tests),
                    cell(r.expected_detection_time),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
    }
    if any_ok {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_SOLVER,
            message: "every sweep entry failed".into(),
        })
    }
}

#[derive(Serialize)]
struct SimReport {
    pi0: f64,
    threshold: f64,
    dt: f64,
    seed: u64,
    /// Closed-form value at `pi0` when the threshold is the solved boundary.
    closed_form_value: Option<f64>,
    #[serde(flatten)]
    summary: McSummary,
}

fn rounded(mut s: McSummary) -> McSummary {
    for x in [
        &mut s.mean_cost,
        &mut s.stderr_cost,
        &mut s.mean_n_tests,
        &mut s.stderr_n_tests,
        &mut s.mean_tau_detect,
        &mut s.stderr_tau_detect,
        &mut s.max_clamp_excursion,
    ] {
        *x = sig12(*x);
    }
    s
}

fn cmd_simulate(cfg: &RunConfig, sink: &mut dyn Write) -> Result<(), Failure> {
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be >= 1"));
        }
        // only fails if a pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let sol = solve(cfg)?;
    let params = sol.params;
    let threshold = cfg.threshold.unwrap_or(sol.a_star);
    let trace = cfg.trace.unwrap_or(false);
    let sim = SimConfig {
        pi0: cfg.pi0.unwrap_or(0.0),
        dt: cfg.dt.unwrap_or(1e-3),
        horizon_cap: cfg.horizon,
        n_paths: if trace { 1 } else { cfg.paths.unwrap_or(10_000) },
        seed: cfg.seed.unwrap_or(0),
        threshold,
        substeps: 1,
    };
    sim.validate()?;

    if trace {
        let (_, points) = simulate_trace(&params, &sim, None, &mut PathRng::new(sim.seed, 0))?;
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(TRACE_HEADER)?;
        for p in points {
            w.write_record([fmt12(p.t), fmt12(p.pi), p.event.as_str().to_string()])?;
        }
        w.flush()?;
        return Ok(());
    }

    let paths = simulate_many(&params, &sim)?;
    let summary = summarize(&paths);
    check_censoring(&summary, &sim, &params)?;
    let closed_form_value = if threshold == sol.a_star {
        Some(sig12(value(sim.pi0, &sol, &QuadratureConfig::default())?))
    } else {
        None
    };
    write_json(
        sink,
        &SimReport {
            pi0: sim.pi0,
            threshold: sig12(threshold),
            dt: sim.dt,
            seed: sim.seed,
            closed_form_value,
            summary: rounded(summary),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt12(0.1234567890123456), "0.123456789012");
        assert_eq!(fmt12(2.0), "2");
        assert_eq!(fmt12(1.0 / 0.6), "1.66666666667");
        assert_eq!(sig12(0.0), 0.0);
    }
}
