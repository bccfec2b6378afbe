//! Least squares Monte Carlo on random time grids.
//!
//! Training runs backward over the exercise index: the realized reward at each
//! path's currently scheduled stop is regressed on the features one index
//! earlier, and the schedule moves forward wherever the immediate reward beats
//! the fitted continuation value. Evaluation follows the fitted rule on fresh
//! antithetic paths.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::improve::ThresholdVector;
use crate::pathgen::{EventProcess, RandomTimeGrid, Walker};
use crate::regress::{fit_least_squares, BasisSpec, FeatureMap, RegressionModel};
use crate::rng::RngStream;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of simulated paths (both members of an antithetic pair count).
    pub n: usize,
}

impl MonteCarloEstimate {
    /// Estimate from antithetic pair averages; pairs are the independent units.
    pub fn from_pairs(pair_means: &[f64]) -> Self {
        let mut est = Self::from_samples(pair_means);
        est.n = 2 * pair_means.len();
        est
    }

    /// Estimate from independent samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                n: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn pooled_se(&self, other: &Self) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// A stopping rule decidable from the current opportunity alone.
///
/// The engine wraps every rule the same way: never stop at index 0, always
/// stop at `kbar` and at the first opportunity past the horizon, otherwise ask
/// [`StopRule::stops_at`]. Rules built this way are consistent: the stop index
/// from `k` equals the stop index from `k + 1` whenever the rule continues at `k`.
pub trait StopRule: Sync {
    fn kbar(&self) -> usize;

    /// Decision at `1 <= k < kbar` for an opportunity at or before the horizon.
    fn stops_at(&self, k: usize, tau: f64, state: &[f64], payoff: f64) -> bool;
}

/// Full stop decision including the forced cases.
#[inline]
pub fn decide<R: StopRule + ?Sized>(
    rule: &R,
    horizon: f64,
    k: usize,
    tau: f64,
    state: &[f64],
    payoff: f64,
) -> bool {
    if k == 0 {
        false
    } else if k >= rule.kbar() || tau > horizon {
        true
    } else {
        rule.stops_at(k, tau, state, payoff)
    }
}

/// Walks forward until the rule stops (including the current position when
/// `include_current`) and returns `(stop index, reward)`.
pub fn run_rule<P, R>(walker: &mut Walker<'_, P>, rule: &R, horizon: f64, include_current: bool) -> (usize, f64)
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    if include_current
        && decide(rule, horizon, walker.index(), walker.tau(), walker.state(), walker.payoff())
    {
        return (walker.index(), walker.payoff());
    }
    loop {
        let u = walker.step();
        if decide(rule, horizon, walker.index(), walker.tau(), walker.state(), u) {
            return (walker.index(), u);
        }
    }
}

/// First index `>= from` at which the rule stops on a stored grid.
pub fn stop_on_grid<R: StopRule + ?Sized>(grid: &RandomTimeGrid, rule: &R, horizon: f64, from: usize) -> (usize, f64) {
    let mut k = from;
    loop {
        if !grid.contains(k) {
            // beyond the stored events everything lies past the horizon
            return (k, 0.0);
        }
        let u = grid.payoff(k);
        if decide(rule, horizon, k, grid.tau(k), grid.state(k), u) {
            return (k, u);
        }
        k += 1;
    }
}

impl<F: FeatureMap> StopRule for RegressionModel<F> {
    fn kbar(&self) -> usize {
        RegressionModel::kbar(self)
    }

    /// Stops when the reward is positive and reaches the fitted continuation
    /// value. A zero reward never stops: rewards are non-negative, so waiting
    /// is at least as good, and a fit dipping below zero out of the money
    /// would otherwise end the path for nothing.
    fn stops_at(&self, k: usize, tau: f64, state: &[f64], payoff: f64) -> bool {
        payoff > 0.0 && payoff >= self.continuation(k, tau, state)
    }
}

impl StopRule for ThresholdVector {
    fn kbar(&self) -> usize {
        ThresholdVector::kbar(self)
    }

    fn stops_at(&self, k: usize, _tau: f64, _state: &[f64], payoff: f64) -> bool {
        payoff >= self.threshold(k)
    }
}

/// One-step improvement of an inner policy; only evaluable by nested simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprovedPolicy {
    pub inner: Box<StoppingPolicy>,
    pub window: usize,
    pub sub_paths: usize,
}

/// The policy families the engine knows about.
#[derive(Clone, Debug, PartialEq)]
pub enum StoppingPolicy {
    Regression(RegressionModel),
    Threshold(ThresholdVector),
    Improved(ImprovedPolicy),
}

impl StoppingPolicy {
    /// The grid-decidable rule behind this policy.
    pub fn as_rule(&self) -> Result<&dyn StopRule> {
        match self {
            StoppingPolicy::Regression(m) => Ok(m),
            StoppingPolicy::Threshold(h) => Ok(h),
            StoppingPolicy::Improved(_) => Err(Error::NotGridDecidable),
        }
    }
}

/// Backward least squares pass over training grids, with an arbitrary feature map
/// and optional per-path weights.
///
/// Every grid must either reach index `kbar` or pass the horizon before it.
/// Regressions at index `k` use only paths with `tau_k <= T`: beyond the
/// horizon every reward is zero, so those paths carry a known zero continuation.
/// A path is rescheduled to stop at `k` when its reward there is positive and
/// strictly above the fitted continuation value.
pub fn train_with<F: FeatureMap>(
    grids: &[RandomTimeGrid],
    kbar: usize,
    features: F,
    weights: Option<&[f64]>,
) -> Result<RegressionModel<F>> {
    if kbar == 0 {
        return Err(invalid("kbar", "must be at least 1"));
    }
    let l = features.feature_count();
    if grids.len() < l {
        return Err(invalid(
            "grids",
            format!("{} training paths for {l} features", grids.len()),
        ));
    }
    if let Some(w) = weights {
        if w.len() != grids.len() {
            return Err(invalid("weights", "one weight per grid"));
        }
    }
    let horizon_ends: Vec<usize> = grids
        .iter()
        .map(|g| {
            if g.first_index() != 0 {
                return Err(invalid("grids", "training grids must start at the root"));
            }
            if !g.passed_horizon() && g.end_index() <= kbar {
                return Err(invalid("grids", "grid ends before kbar without passing the horizon"));
            }
            Ok(g.natural_end())
        })
        .collect::<Result<_>>()?;

    // realized reward at the scheduled stop, initialized at kbar
    let mut target: Vec<f64> = grids.iter().map(|g| g.payoff(kbar)).collect();
    let mut coefficients = vec![Vec::new(); kbar];
    let mut rows: Vec<f64> = Vec::new();

    for k in (1..=kbar).rev() {
        let at = k - 1;
        let alive: Vec<usize> = (0..grids.len()).filter(|&n| at < horizon_ends[n]).collect();
        if alive.is_empty() {
            coefficients[at] = vec![0.0; l];
            continue;
        }
        rows.clear();
        rows.resize(alive.len() * l, 0.0);
        rows.par_chunks_mut(l).zip(alive.par_iter()).for_each(|(row, &n)| {
            let g = &grids[n];
            features.fill(g.tau(at), g.state(at), row);
        });
        let y: Vec<f64> = alive.iter().map(|&n| target[n]).collect();
        let w: Option<Vec<f64>> = weights.map(|w| alive.iter().map(|&n| w[n]).collect());
        let coef = fit_least_squares(&rows, l, &y, w.as_deref())?;
        if at >= 1 {
            let fitted: Vec<f64> = rows
                .par_chunks(l)
                .map(|row| row.iter().zip(&coef).map(|(f, c)| f * c).sum())
                .collect();
            for (&n, c) in alive.iter().zip(fitted) {
                let u = grids[n].payoff(at);
                if u > 0.0 && u > c {
                    target[n] = u;
                }
            }
        }
        coefficients[at] = coef;
    }
    RegressionModel::with_features(features, coefficients)
}

/// Backward least squares pass with one of the standard bases.
pub fn train_continuation(grids: &[RandomTimeGrid], kbar: usize, basis: BasisSpec) -> Result<RegressionModel> {
    basis.validate()?;
    train_with(grids, kbar, basis, None)
}

/// Lower-biased value of a grid-decidable rule on `n_paths` fresh antithetic paths.
pub fn evaluate_rule<P, R>(process: &P, rule: &R, n_paths: usize, stream: &RngStream) -> Result<MonteCarloEstimate>
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    if n_paths < 2 || !n_paths.is_multiple_of(2) {
        return Err(invalid("n_paths", "must be even and at least 2"));
    }
    let horizon = process.horizon();
    let pairs: Vec<f64> = (0..(n_paths / 2) as u64)
        .into_par_iter()
        .map(|i| {
            let s = stream.path(i);
            let mut total = 0.0;
            for anti in [false, true] {
                let mut w = Walker::from_root(process, s.draws(anti));
                total += run_rule(&mut w, rule, horizon, false).1;
            }
            0.5 * total
        })
        .collect();
    Ok(MonteCarloEstimate::from_pairs(&pairs))
}

/// Primal estimate for a policy; the improved variant is rejected.
pub fn evaluate_primal<P: EventProcess + ?Sized>(
    process: &P,
    policy: &StoppingPolicy,
    n_paths: usize,
    stream: &RngStream,
) -> Result<MonteCarloEstimate> {
    evaluate_rule(process, policy.as_rule()?, n_paths, stream)
}

/// Simulates `n_paths` antithetic training grids up to `max_index`.
pub fn simulate_grids<P: EventProcess + ?Sized>(
    process: &P,
    n_paths: usize,
    max_index: usize,
    stream: &RngStream,
) -> Result<Vec<RandomTimeGrid>> {
    if n_paths < 2 || !n_paths.is_multiple_of(2) {
        return Err(invalid("n_paths", "must be even and at least 2"));
    }
    let pairs: Vec<(RandomTimeGrid, RandomTimeGrid)> = (0..(n_paths / 2) as u64)
        .into_par_iter()
        .map(|i| crate::pathgen::antithetic_pair(process, max_index, &stream.path(i)))
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().flat_map(|(a, b)| [a, b]).collect())
}
