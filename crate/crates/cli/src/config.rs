//! Parameter bundle shared by flags and JSON config files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use quickdetect::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Every setting a command can take. Unset fields fall back to the config
/// file, then to the command's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

macro_rules! prefer {
    ($a:ident, $b:ident, $($f:ident),*) => {
        RunConfig { $($f: $a.$f.or($b.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Fields set in `self` win over `file`. Giving `gamma` on the command
    /// line drops `mu`/`sigma` from the file and vice versa.
    pub fn over(self, mut file: RunConfig) -> RunConfig {
        if self.gamma.is_some() {
            file.mu = None;
            file.sigma = None;
        }
        if self.mu.is_some() || self.sigma.is_some() {
            file.gamma = None;
        }
        let flags = self;
        prefer!(
            flags, file, lambda, mu, sigma, gamma, beta, eps, tol, grid, betas, eps_grid, pi0,
            paths, dt, seed, threshold, horizon, trace, threads, format, output
        )
    }

    /// Model parameters with `beta` taken from the argument.
    pub fn params_with_beta(&self, beta: f64) -> Result<ModelParams, String> {
        let lambda = self.lambda.ok_or("missing --lambda")?;
        let eps = self.eps.ok_or("missing --eps")?;
        let built = match (self.gamma, self.mu) {
            (Some(_), Some(_)) => return Err("give either --gamma or --mu/--sigma, not both".into()),
            (Some(gamma), None) => {
                if self.sigma.is_some() {
                    return Err("give either --gamma or --mu/--sigma, not both".into());
                }
                ModelParams::from_gamma(lambda, gamma, beta, eps)
            }
            (None, Some(mu)) => ModelParams::new(lambda, mu, self.sigma.unwrap_or(1.0), beta, eps),
            (None, None) => return Err("missing --gamma or --mu".into()),
        };
        built.map_err(|e| e.to_string())
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        self.params_with_beta(self.beta.ok_or("missing --beta")?)
    }
}

/// Parses `start:step:stop` or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("invalid grid '{spec}': expected start:step:stop or a comma-separated list");
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let (start, step, stop) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        let mut out: Vec<f64> = (0..=n).map(|i| start + i as f64 * step).collect();
        // land exactly on the end point when the step divides the range
        if let Some(last) = out.last_mut() {
            if (*last - stop).abs() <= 1e-9 * step {
                *last = stop;
            }
        }
        return Ok(out);
    }
    if parts.len() != 1 {
        return Err(bad());
    }
    spec.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}
