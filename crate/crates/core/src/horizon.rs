//! Choice of the truncation index and the integrability diagnostic.

use rayon::prelude::*;

use crate::benchmark::scaled_exp_sum;
use crate::error::{invalid, Error, Result};
use crate::lsmc::MonteCarloEstimate;
use crate::pathgen::{antithetic_pair, EventProcess, RandomTimeGrid};
use crate::rng::RngStream;

/// Selected truncation index with the tail statistic that certified it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub kbar: usize,
    /// Estimate of `E[1{tau_K <= T} sup_(i > K) Z_i]` at `K = kbar`.
    pub tail: MonteCarloEstimate,
}

const PAIRS_PER_CHUNK: usize = 1024;

/// Tail statistic `1{tau_K <= T} sup_(i > K) Z_i` for `K = 1, 2, ...`, up to
/// the last index before the horizon.
fn tail_profile(grid: &RandomTimeGrid) -> Vec<f64> {
    let end = grid.natural_end();
    let mut out = vec![0.0; end.saturating_sub(1)];
    let mut sup = 0.0f64;
    for k in (1..end).rev() {
        out[k - 1] = sup;
        sup = sup.max(grid.payoff(k));
    }
    out
}

/// Tail estimates for `K = 1 ..= max_k` from `n_paths` antithetic grids, each
/// simulated to its first opportunity past the horizon.
pub fn tail_estimates<P: EventProcess + ?Sized>(
    process: &P,
    n_paths: usize,
    max_k: usize,
    stream: &RngStream,
) -> Result<Vec<MonteCarloEstimate>> {
    if n_paths < 2 || !n_paths.is_multiple_of(2) {
        return Err(invalid("n_paths", "must be even and at least 2"));
    }
    let sim_cap = 4 * max_k + 64;
    let n_pairs = n_paths / 2;
    let mut sum = vec![0.0f64; max_k];
    let mut sum_sq = vec![0.0f64; max_k];
    for start in (0..n_pairs).step_by(PAIRS_PER_CHUNK) {
        let stop = (start + PAIRS_PER_CHUNK).min(n_pairs);
        let chunk: Vec<Vec<f64>> = (start as u64..stop as u64)
            .into_par_iter()
            .map(|i| {
                let (a, b) = antithetic_pair(process, sim_cap, &stream.path(i))?;
                if !a.passed_horizon() || !b.passed_horizon() {
                    return Err(Error::CapExhausted { cap: sim_cap });
                }
                let (pa, pb) = (tail_profile(&a), tail_profile(&b));
                Ok((0..max_k)
                    .map(|k| 0.5 * (pa.get(k).unwrap_or(&0.0) + pb.get(k).unwrap_or(&0.0)))
                    .collect())
            })
            .collect::<Result<_>>()?;
        for pair in chunk {
            for (k, v) in pair.into_iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
    }
    let n = n_pairs as f64;
    Ok((0..max_k)
        .map(|k| {
            let mean = sum[k] / n;
            let var = if n_pairs > 1 {
                ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            MonteCarloEstimate {
                mean,
                std_error: (var / n).sqrt(),
                n: n_paths,
            }
        })
        .collect())
}

/// Smallest `K <= hard_cap` whose tail estimate plus two standard errors is below `epsilon`.
pub fn select_truncation<P: EventProcess + ?Sized>(
    process: &P,
    epsilon: f64,
    n_paths: usize,
    hard_cap: usize,
    stream: &RngStream,
) -> Result<Truncation> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", "must be positive and finite"));
    }
    if hard_cap == 0 {
        return Err(invalid("hard_cap", "must be at least 1"));
    }
    let tails = tail_estimates(process, n_paths, hard_cap, stream)?;
    for (k, t) in tails.iter().enumerate() {
        if t.mean + 2.0 * t.std_error < epsilon {
            return Ok(Truncation { kbar: k + 1, tail: *t });
        }
    }
    let last = tails[hard_cap - 1];
    Err(Error::TruncationFailed {
        cap: hard_cap,
        tail: last.mean,
        se: last.std_error,
    })
}

/// Result of [`uicon_diagnostic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UiconDiagnostic {
    /// `sum_(j=1)^(j_max) P(tau_j <= T)^alpha`.
    pub partial_sum: f64,
    /// Upper bound on the remaining terms; infinite when no bound applies yet.
    pub tail_bound: f64,
    pub converged: bool,
}

/// `P(N >= j)` for `N ~ Poisson(x)`.
fn poisson_upper_tail(j: usize, x: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    if (j as f64) <= x {
        return 1.0 - scaled_exp_sum(j - 1, x).unwrap_or(1.0);
    }
    // direct summation of the upper terms avoids cancellation
    let mut log_term = j as f64 * x.ln() - x - (1..=j).map(|i| (i as f64).ln()).sum::<f64>();
    let mut total = 0.0;
    let mut m = j;
    loop {
        let t = log_term.exp();
        total += t;
        m += 1;
        log_term += x.ln() - (m as f64).ln();
        if t <= 1e-18 * total || t == 0.0 {
            return total.min(1.0);
        }
    }
}

/// Summability check for `P(tau_j <= T)^alpha` under arrivals at rate `lambda`.
///
/// The tail beyond `j_max` is bounded with the Chernoff estimate
/// `P(N >= j) <= e^(-x) (e x / j)^j` for `j > x = lambda T`, summed as a
/// geometric series once the ratio of consecutive bounds is below one.
pub fn uicon_diagnostic(lambda: f64, horizon: f64, alpha: f64, j_max: usize) -> Result<UiconDiagnostic> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid("alpha", "must lie strictly between 0 and 1/2"));
    }
    if !(lambda >= 0.0 && lambda.is_finite() && horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid("lambda", "rate and horizon must be finite and non-negative"));
    }
    let x = lambda * horizon;
    if x == 0.0 {
        return Ok(UiconDiagnostic {
            partial_sum: 0.0,
            tail_bound: 0.0,
            converged: true,
        });
    }
    let partial_sum: f64 = (1..=j_max).map(|j| poisson_upper_tail(j, x).powf(alpha)).sum();
    let next = (j_max + 1) as f64;
    let e = std::f64::consts::E;
    let tail_bound = if next > x && e * x < next + 1.0 {
        let first = (alpha * (-x + next * (e * x / next).ln())).exp();
        let ratio = (e * x / (next + 1.0)).powf(alpha);
        first / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    Ok(UiconDiagnostic {
        partial_sum,
        tail_bound,
        converged: tail_bound < 1e-12,
    })
}
