//! Market dynamics, arrival intensities and rewards.
//!
//! Asset prices are multiplicative jump-diffusions that can be sampled exactly
//! over any time step, so nothing downstream carries discretization error.
//! Rewards are already discounted: `Z(t, x)` is the deflated payoff, and it
//! vanishes at `t = 0` and after the maturity.

use crate::error::{invalid, Error, Result};

/// Where asset jumps come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpSource {
    /// Each asset jumps at the times of its own Poisson process, independent of
    /// the exercise opportunities. The drift is compensated.
    Independent,
    /// Every asset jumps exactly at each exercise opportunity (the closed-form
    /// benchmark). No compensation.
    Arrivals,
}

/// Multi-asset geometric Brownian motion with lognormal-free relative jumps.
///
/// Assets are driven by independent Brownian motions. Per asset `m`,
/// `X_t = X_s * exp((b - c - sigma^2/2)(t - s) + sigma (W_t - W_s)) * (1 + J)^N`
/// where `b` is the drift, `J` the relative jump size, `N` the number of jumps
/// in `(s, t]` and `c = J * lambda_J` the compensator for independent jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketModel {
    drift: Vec<f64>,
    sigma: Vec<f64>,
    jump_size: Vec<f64>,
    jump_rate: Vec<f64>,
    x0: Vec<f64>,
    jump_source: JumpSource,
}

impl MarketModel {
    /// Risk-neutral jump-diffusion: drift `r - delta`, independent jumps of
    /// relative size `mu_j` at rate `lambda_j`.
    pub fn jump_diffusion(
        r: f64,
        delta: Vec<f64>,
        sigma: Vec<f64>,
        mu_j: Vec<f64>,
        lambda_j: Vec<f64>,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let drift = delta.iter().map(|d| r - d).collect();
        Self::new(drift, sigma, mu_j, lambda_j, x0, JumpSource::Independent)
    }

    /// Single asset that jumps by the factor `1 + j` at every exercise
    /// opportunity and otherwise follows a geometric Brownian motion with drift `mu`.
    pub fn benchmark(mu: f64, sigma: f64, j: f64, x0: f64) -> Result<Self> {
        Self::new(
            vec![mu],
            vec![sigma],
            vec![j],
            vec![0.0],
            vec![x0],
            JumpSource::Arrivals,
        )
    }

    pub fn new(
        drift: Vec<f64>,
        sigma: Vec<f64>,
        jump_size: Vec<f64>,
        jump_rate: Vec<f64>,
        x0: Vec<f64>,
        jump_source: JumpSource,
    ) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(invalid("x0", "at least one asset is required"));
        }
        for (name, v) in [
            ("drift", &drift),
            ("sigma", &sigma),
            ("jump_size", &jump_size),
            ("jump_rate", &jump_rate),
        ] {
            if v.len() != d {
                return Err(invalid(name, format!("expected {d} entries, got {}", v.len())));
            }
        }
        let all = drift
            .iter()
            .chain(&sigma)
            .chain(&jump_size)
            .chain(&jump_rate)
            .chain(&x0);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("market model"));
        }
        if x0.iter().any(|&x| x <= 0.0) {
            return Err(invalid("x0", "initial prices must be positive"));
        }
        if sigma.iter().any(|&s| s < 0.0) {
            return Err(invalid("sigma", "volatility must be non-negative"));
        }
        if jump_rate.iter().any(|&l| l < 0.0) {
            return Err(invalid("lambda_j", "jump intensity must be non-negative"));
        }
        if jump_size.iter().any(|&j| j <= -1.0) {
            return Err(invalid("mu_j", "relative jump size must exceed -1"));
        }
        Ok(Self {
            drift,
            sigma,
            jump_size,
            jump_rate,
            x0,
            jump_source,
        })
    }

    pub fn asset_count(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn jump_size(&self) -> &[f64] {
        &self.jump_size
    }

    pub fn jump_rate(&self) -> &[f64] {
        &self.jump_rate
    }

    pub fn jump_source(&self) -> JumpSource {
        self.jump_source
    }

    /// Copy of the model with a different starting point.
    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self> {
        Self::new(
            self.drift.clone(),
            self.sigma.clone(),
            self.jump_size.clone(),
            self.jump_rate.clone(),
            x0,
            self.jump_source,
        )
    }

    /// Drift of `ln X^m` per unit time, excluding the jump term.
    pub(crate) fn log_drift(&self, m: usize) -> f64 {
        let comp = match self.jump_source {
            JumpSource::Independent => self.jump_size[m] * self.jump_rate[m],
            JumpSource::Arrivals => 0.0,
        };
        self.drift[m] - comp - 0.5 * self.sigma[m] * self.sigma[m]
    }

    /// Moves one asset forward by `dt` given its Gaussian draw and jump count.
    #[inline]
    pub(crate) fn step_asset(&self, m: usize, x: f64, dt: f64, xi: f64, jumps: u64) -> f64 {
        let mut v = x * (self.log_drift(m) * dt + self.sigma[m] * dt.sqrt() * xi).exp();
        if jumps > 0 {
            v *= (1.0 + self.jump_size[m]).powi(jumps as i32);
        }
        v
    }

    /// Exact transition of the price vector over `dt`.
    ///
    /// `gaussians` holds one standard normal per asset and `jump_counts` the
    /// number of jumps of each asset during the step.
    pub fn exact_transition(
        &self,
        state: &[f64],
        dt: f64,
        gaussians: &[f64],
        jump_counts: &[u64],
    ) -> Result<Vec<f64>> {
        let d = self.asset_count();
        if state.len() != d || gaussians.len() != d || jump_counts.len() != d {
            return Err(invalid("state", format!("expected {d} assets")));
        }
        if !dt.is_finite() || state.iter().chain(gaussians).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exact_transition"));
        }
        if dt < 0.0 {
            return Err(invalid("dt", "time step must be non-negative"));
        }
        if state.iter().any(|&x| x <= 0.0) {
            return Err(invalid("state", "prices must be positive"));
        }
        Ok((0..d)
            .map(|m| self.step_asset(m, state[m], dt, gaussians[m], jump_counts[m]))
            .collect())
    }
}

/// Arrival mechanism for exercise opportunities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrivalSpec {
    pub rate: f64,
    /// Opportunities only arrive while every asset price is at or above this level.
    pub barrier: Option<f64>,
    pub horizon: f64,
}

impl ArrivalSpec {
    pub fn homogeneous(rate: f64, horizon: f64) -> Result<Self> {
        Self::new(rate, None, horizon)
    }

    pub fn new(rate: f64, barrier: Option<f64>, horizon: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid("rate", "arrival rate must be positive and finite"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("horizon", "horizon must be positive and finite"));
        }
        if let Some(b) = barrier {
            if b.is_nan() {
                return Err(Error::NonFinite("barrier"));
            }
        }
        Ok(Self {
            rate,
            barrier,
            horizon,
        })
    }

    /// Whether a candidate arrival at state `x` is accepted.
    #[inline]
    pub fn gate_open(&self, x: &[f64]) -> bool {
        match self.barrier {
            None => true,
            Some(b) => x.iter().all(|&v| v >= b),
        }
    }
}

/// Instantaneous arrival intensity at `(t, x)`.
pub fn arrival_intensity(spec: &ArrivalSpec, _t: f64, x: &[f64]) -> f64 {
    if spec.gate_open(x) {
        spec.rate
    } else {
        0.0
    }
}

/// Reward function `Z(t, x)`, discounted to time zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PayoffSpec {
    /// `exp(-r t) x^eta` for a single asset.
    Power { eta: f64, r: f64, maturity: f64 },
    /// `exp(-r t) (max_m x^m - strike)^+`.
    MaxCall { strike: f64, r: f64, maturity: f64 },
}

impl PayoffSpec {
    pub fn power(eta: f64, r: f64, maturity: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(invalid("eta", "power must be positive"));
        }
        check_common(r, maturity)?;
        Ok(PayoffSpec::Power { eta, r, maturity })
    }

    pub fn max_call(strike: f64, r: f64, maturity: f64) -> Result<Self> {
        if !(strike.is_finite() && strike > 0.0) {
            return Err(invalid("strike", "strike must be positive"));
        }
        check_common(r, maturity)?;
        Ok(PayoffSpec::MaxCall { strike, r, maturity })
    }

    pub fn maturity(&self) -> f64 {
        match *self {
            PayoffSpec::Power { maturity, .. } | PayoffSpec::MaxCall { maturity, .. } => maturity,
        }
    }

    /// Reward without input validation, used on the hot path.
    #[inline]
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match *self {
            PayoffSpec::Power { eta, r, maturity } => {
                if t <= 0.0 || t > maturity {
                    0.0
                } else {
                    (-r * t).exp() * x[0].powf(eta)
                }
            }
            PayoffSpec::MaxCall { strike, r, maturity } => {
                if t <= 0.0 || t > maturity {
                    return 0.0;
                }
                let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let intrinsic = top - strike;
                if intrinsic > 0.0 {
                    (-r * t).exp() * intrinsic
                } else {
                    0.0
                }
            }
        }
    }
}

fn check_common(r: f64, maturity: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::NonFinite("discount rate"));
    }
    if !(maturity.is_finite() && maturity > 0.0) {
        return Err(invalid("maturity", "maturity must be positive"));
    }
    Ok(())
}

/// Discounted reward, zero outside `(0, T]`.
pub fn payoff_value(payoff: &PayoffSpec, t: f64, x: &[f64]) -> Result<f64> {
    if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("payoff_value"));
    }
    if x.is_empty() {
        return Err(invalid("x", "empty price vector"));
    }
    Ok(payoff.value(t, x))
}
