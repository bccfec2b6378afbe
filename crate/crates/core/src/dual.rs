//! Upper bounds by nested simulation of an approximate Doob martingale.
//!
//! Given a rule that stops by `kbar`, the value process of the rule is
//! `Y_k = U_k` where it stops and `C_k` otherwise, with `C_k` the expected
//! reward from following the rule from `k + 1`. Along each outer path `C_k` is
//! estimated from a fresh batch of resumed sub-paths, the martingale grows by
//! `Y_{k+1} - C_k` per index, and the path statistic is `max_k (U_k - M_k)`.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::lsmc::{decide, MonteCarloEstimate, StopRule};
use crate::pathgen::{EventProcess, Walker};
use crate::rng::RngStream;

/// Outer and sub-path counts, both even.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DualConfig {
    pub outer: usize,
    pub sub: usize,
}

/// One outer path of the dual estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPath {
    /// `max_k (U_k - M_k)`.
    pub statistic: f64,
    /// `increments[k] = Y_{k+1} - C_k` for every index the path visited before
    /// stopping at `kbar` or passing the horizon.
    pub increments: Vec<f64>,
}

/// Per-path dual statistics in outer-path order (antithetic partners adjacent).
pub fn dual_paths<P, R>(process: &P, rule: &R, cfg: DualConfig, outer: &RngStream, sub: &RngStream) -> Result<Vec<DualPath>>
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    for (name, n) in [("outer", cfg.outer), ("sub", cfg.sub)] {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(invalid(name, "must be even and at least 2"));
        }
    }
    if outer.lane.purpose == sub.lane.purpose {
        return Err(invalid("sub", "sub-path stream must differ from the outer stream"));
    }
    let pairs: Vec<[DualPath; 2]> = (0..(cfg.outer / 2) as u64)
        .into_par_iter()
        .map(|i| {
            [false, true].map(|anti| {
                let w = Walker::from_root(process, outer.path(i).draws(anti));
                dual_path(process, rule, cfg.sub, w, &sub.path(2 * i + anti as u64))
            })
        })
        .collect();
    Ok(pairs.into_iter().flatten().collect())
}

/// Upper-biased value estimate; the standard error is taken over antithetic outer pairs.
pub fn upper_bound<P, R>(process: &P, rule: &R, cfg: DualConfig, outer: &RngStream, sub: &RngStream) -> Result<MonteCarloEstimate>
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    let paths = dual_paths(process, rule, cfg, outer, sub)?;
    let pairs: Vec<f64> = paths
        .chunks(2)
        .map(|p| 0.5 * (p[0].statistic + p[1].statistic))
        .collect();
    Ok(MonteCarloEstimate::from_pairs(&pairs))
}

fn dual_path<P, R>(process: &P, rule: &R, n_sub: usize, mut w: Walker<'_, P>, sub: &RngStream) -> DualPath
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    let horizon = process.horizon();
    let kbar = rule.kbar();
    let mut m = 0.0;
    let mut statistic = w.payoff();
    let mut increments = Vec::new();
    let mut c = continuation(process, rule, n_sub, &w, &sub.exercise(0));
    loop {
        let u = w.step();
        let k = w.index();
        let done = k >= kbar || w.tau() > horizon;
        let (y, c_next) = if decide(rule, horizon, k, w.tau(), w.state(), u) {
            let c_next = if done {
                0.0
            } else {
                continuation(process, rule, n_sub, &w, &sub.exercise(k as u64))
            };
            (u, c_next)
        } else {
            let c_next = continuation(process, rule, n_sub, &w, &sub.exercise(k as u64));
            (c_next, c_next)
        };
        increments.push(y - c);
        m += y - c;
        statistic = statistic.max(u - m);
        if done {
            // beyond kbar or the horizon every reward and increment is zero
            return DualPath { statistic, increments };
        }
        c = c_next;
    }
}

/// Sub-simulated reward of following the rule from the index after the walker's.
fn continuation<P, R>(process: &P, rule: &R, n_sub: usize, at: &Walker<'_, P>, stream: &RngStream) -> f64
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    let horizon = process.horizon();
    let mut total = 0.0;
    for m in 0..(n_sub / 2) as u64 {
        for anti in [false, true] {
            let mut w = Walker::from_point(process, at.index(), at.tau(), at.state(), stream.sub(m).draws(anti));
            loop {
                let u = w.step();
                if decide(rule, horizon, w.index(), w.tau(), w.state(), u) {
                    total += u;
                    break;
                }
            }
        }
    }
    total / n_sub as f64
}
