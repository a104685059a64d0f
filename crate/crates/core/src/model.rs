//! Model constants, the negative-test update map and the breakpoint ladder
//! it induces on `[0, 1)`.

use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Default cutoff: the ladder stops at the first breakpoint `>= 1 - eta`.
pub const DEFAULT_ETA: f64 = 1e-9;

/// Hard cap on the number of breakpoints in a ladder.
pub const MAX_BREAKPOINTS: usize = 10_000;

/// Validated problem constants.
///
/// `gamma = mu^2 / (2 sigma^2)` is the signal-to-noise rate of the
/// observation and `rho = lambda / gamma`. Everything downstream depends
/// on `(lambda, gamma, beta, epsilon)` only; `mu` and `sigma` are kept for
/// path simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    lambda: f64,
    mu: f64,
    sigma: f64,
    beta: f64,
    epsilon: f64,
    gamma: f64,
    rho: f64,
}

impl ModelParams {
    /// Builds the parameter set, rejecting values outside the model's domain.
    pub fn new(lambda: f64, mu: f64, sigma: f64, beta: f64, epsilon: f64) -> Result<Self> {
        check_finite("lambda", lambda)?;
        check_finite("mu", mu)?;
        check_finite("sigma", sigma)?;
        check_finite("beta", beta)?;
        check_finite("epsilon", epsilon)?;
        if lambda <= 0.0 {
            return Err(domain(format!("lambda must be > 0 (got {lambda})")));
        }
        if mu == 0.0 {
            return Err(domain("mu must be nonzero"));
        }
        if sigma <= 0.0 {
            return Err(domain(format!("sigma must be > 0 (got {sigma})")));
        }
        if beta <= 0.0 {
            return Err(domain(format!("beta must be > 0 (got {beta})")));
        }
        if epsilon < 0.0 {
            return Err(domain(format!("epsilon must be >= 0 (got {epsilon})")));
        }
        if epsilon >= 1.0 {
            return Err(domain(format!("epsilon must be < 1 (got {epsilon})")));
        }
        let gamma = mu * mu / (2.0 * sigma * sigma);
        Ok(ModelParams {
            lambda,
            mu,
            sigma,
            beta,
            epsilon,
            gamma,
            rho: lambda / gamma,
        })
    }

    /// Parametrisation by the signal-to-noise rate: `mu = sqrt(2 gamma)`, `sigma = 1`.
    pub fn from_gamma(lambda: f64, gamma: f64, beta: f64, epsilon: f64) -> Result<Self> {
        check_finite("gamma", gamma)?;
        if gamma <= 0.0 {
            return Err(domain(format!("gamma must be > 0 (got {gamma})")));
        }
        let mut p = Self::new(lambda, (2.0 * gamma).sqrt(), 1.0, beta, epsilon)?;
        // keep the caller's gamma bit-exact
        p.gamma = gamma;
        p.rho = lambda / gamma;
        Ok(p)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::rebuild(self, self.beta, epsilon)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::rebuild(self, beta, self.epsilon)
    }

    fn rebuild(&self, beta: f64, epsilon: f64) -> Result<Self> {
        let mut p = Self::new(self.lambda, self.mu, self.sigma, beta, epsilon)?;
        p.gamma = self.gamma;
        p.rho = self.rho;
        Ok(p)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite (got {x})")))
    }
}

/// Posterior after a negative test: `g(pi) = eps pi / (1 - (1 - eps) pi)`.
#[inline]
pub fn g(pi: f64, epsilon: f64) -> f64 {
    if pi >= 1.0 {
        return 1.0;
    }
    let den = 1.0 - (1.0 - epsilon) * pi;
    if den <= 0.0 {
        // pi = 1 with eps = 0 is 0/0; the map fixes 1 for every eps
        return 1.0;
    }
    (epsilon * pi / den).clamp(0.0, 1.0)
}

/// Inverse of [`g`]. At `eps = 0` this is the limit map: `0 -> 0`, anything else `-> 1`.
#[inline]
pub fn g_inv(q: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return if q == 0.0 { 0.0 } else { 1.0 };
    }
    if q >= 1.0 {
        return 1.0;
    }
    (q / (epsilon + q * (1.0 - epsilon))).clamp(0.0, 1.0)
}

/// The ladder `a, g^-1(a), g^-2(a), ...` that splits `[0, 1)` into
/// `I_0 = [0, a)` and `I_k = [g^-(k-1)(a), g^-k(a))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalDecomposition {
    threshold: f64,
    breakpoints: Vec<f64>,
    epsilon: f64,
    /// The next rung would be exactly 1, so the last interval runs to 1.
    closed: bool,
}

impl IntervalDecomposition {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Whether the ladder covers all of `[0, 1)`. True at `eps = 0`.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Right end of the covered range: 1 for a closed ladder, else the last breakpoint.
    pub fn coverage_end(&self) -> f64 {
        if self.closed {
            1.0
        } else {
            *self.breakpoints.last().expect("ladder is never empty")
        }
    }

    /// Bounds `[lo, hi)` of interval `I_k`.
    pub fn interval(&self, k: usize) -> Option<(f64, f64)> {
        let b = &self.breakpoints;
        match k {
            0 => Some((0.0, self.threshold)),
            k if k < b.len() => Some((b[k - 1], b[k])),
            k if k == b.len() && self.closed => Some((b[k - 1], 1.0)),
            _ => None,
        }
    }
}

/// Builds the breakpoint ladder for `threshold`, truncated at the first
/// rung `>= 1 - eta`.
pub fn decompose(threshold: f64, epsilon: f64, eta: f64) -> Result<IntervalDecomposition> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(domain(format!("threshold must lie in (0, 1) (got {threshold})")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(domain(format!("epsilon must lie in [0, 1) (got {epsilon})")));
    }
    if !(eta > 0.0 && eta < 1.0 - threshold) {
        return Err(domain(format!(
            "cutoff eta must lie in (0, 1 - threshold) = (0, {}) (got {eta})",
            1.0 - threshold
        )));
    }
    let mut breakpoints = vec![threshold];
    let mut last = threshold;
    let mut closed = false;
    loop {
        let next = g_inv(last, epsilon);
        if next >= 1.0 {
            closed = true;
            break;
        }
        if next <= last || breakpoints.len() >= MAX_BREAKPOINTS {
            return Err(Error::Truncation {
                count: breakpoints.len(),
                last,
                eta,
            });
        }
        breakpoints.push(next);
        last = next;
        if next >= 1.0 - eta {
            break;
        }
    }
    Ok(IntervalDecomposition {
        threshold,
        breakpoints,
        epsilon,
        closed,
    })
}

/// Index `k` of the interval `I_k` containing `pi`.
pub fn interval_index(pi: f64, decomp: &IntervalDecomposition) -> Result<usize> {
    if !(0.0..1.0).contains(&pi) {
        return Err(domain(format!("probability must lie in [0, 1) (got {pi})")));
    }
    let b = &decomp.breakpoints;
    let below = b.partition_point(|&x| x <= pi);
    if below == b.len() && !decomp.closed {
        return Err(Error::OutOfLadder {
            pi,
            last: b[b.len() - 1],
        });
    }
    Ok(below)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.5, 0.4).unwrap();
        assert_eq!(p.gamma(), 0.5);
        assert_eq!(p.rho(), 4.0);
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!((p.gamma(), p.rho()), (0.5, 4.0));
        let p = ModelParams::from_gamma(2.0, 0.5, 1.0, 0.25).unwrap();
        assert_eq!((p.gamma(), p.rho()), (0.5, 4.0));
        assert!((p.mu() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        let err = ModelParams::new(1.0, 0.0, 1.0, 1.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("mu must be nonzero"));
        let err = ModelParams::new(2.0, 1.0, 1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("epsilon must be < 1"));
        let err = ModelParams::new(2.0, 1.0, 0.0, 1.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("sigma"));
        assert!(ModelParams::new(0.0, 1.0, 1.0, 1.0, 0.1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, -1.0, 0.1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, -0.1).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn update_map_values() {
        assert!((g(0.792, 0.4) - 0.6037).abs() < 1e-4);
        assert_eq!(g(0.0, 0.3), 0.0);
        assert_eq!(g(1.0, 0.3), 1.0);
        assert_eq!(g(1.0, 0.0), 1.0);
        assert!((g(0.5, 0.5) - 1.0 / 3.0).abs() < 1e-16);
        assert!((g_inv(g(0.7, 0.3), 0.3) - 0.7).abs() < 1e-15);
        assert_eq!(g_inv(0.0, 0.3), 0.0);
        assert_eq!(g_inv(1.0, 0.3), 1.0);
        assert_eq!(g_inv(0.0, 0.0), 0.0);
        assert_eq!(g_inv(0.2, 0.0), 1.0);
    }

    #[test]
    fn ladder_shapes() {
        let d = decompose(0.5, 0.0, DEFAULT_ETA).unwrap();
        assert_eq!(d.breakpoints(), &[0.5]);
        assert!(d.is_closed());

        let d = decompose(0.5, 0.5, 1e-6).unwrap();
        let b = d.breakpoints();
        assert_eq!(b[0], 0.5);
        assert!((b[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((b[2] - 0.8).abs() < 1e-15);
        assert!(*b.last().unwrap() >= 1.0 - 1e-6);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ladder_rejects_bad_input() {
        assert!(decompose(0.0, 0.5, 1e-6).is_err());
        assert!(decompose(0.5, 1.0, 1e-6).is_err());
        assert!(decompose(0.5, 0.5, 0.6).is_err());
        // needs ~ log(1e-300) / log(0.999) rungs, far past the cap
        assert!(matches!(
            decompose(0.5, 0.999, 1e-300),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn interval_lookup() {
        let d = decompose(0.5, 0.5, 1e-6).unwrap();
        assert_eq!(interval_index(0.0, &d).unwrap(), 0);
        assert_eq!(interval_index(0.5, &d).unwrap(), 1);
        assert_eq!(interval_index(0.75, &d).unwrap(), 2);
        assert_eq!(interval_index(0.8, &d).unwrap(), 3);
        assert!(matches!(
            interval_index(1.0 - 1e-9, &d),
            Err(Error::OutOfLadder { .. })
        ));
        assert!(interval_index(1.0, &d).is_err());

        let d = decompose(0.5, 0.0, 1e-6).unwrap();
        assert_eq!(interval_index(0.999_999_9, &d).unwrap(), 1);
        assert_eq!(d.interval(1), Some((0.5, 1.0)));
    }
}
