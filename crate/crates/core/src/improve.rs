//! Threshold policies and one-step policy improvement.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lsmc::{decide, evaluate_rule, MonteCarloEstimate, StopRule};
use crate::pathgen::{EventProcess, RandomTimeGrid, Walker};
use crate::regress::keyed;
use crate::rng::RngStream;

/// Per-index reward thresholds `h_1, ..., h_kbar` with `h_kbar = 0`.
///
/// The rule stops at index `k` when the reward is at least `h_k`; an infinite
/// threshold means never stop there.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdVector {
    levels: Vec<f64>,
}

impl ThresholdVector {
    /// `levels[k - 1]` is the threshold at index `k`.
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        match levels.last() {
            None => return Err(invalid("thresholds", "need at least one level")),
            Some(&last) if last != 0.0 => {
                return Err(invalid("thresholds", "the level at kbar must be 0"))
            }
            _ => {}
        }
        if let Some(bad) = levels.iter().position(|h| h.is_nan() || *h < 0.0) {
            return Err(invalid(
                "thresholds",
                format!("level {} is {}", bad + 1, levels[bad]),
            ));
        }
        Ok(Self { levels })
    }

    pub fn kbar(&self) -> usize {
        self.levels.len()
    }

    /// Threshold at `1 <= k <= kbar`; zero beyond.
    pub fn threshold(&self, k: usize) -> f64 {
        assert!(k >= 1, "no threshold at the root");
        self.levels.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "randstop-thresholds v1").unwrap();
        writeln!(s, "kbar {}", self.kbar()).unwrap();
        for (i, h) in self.levels.iter().enumerate() {
            writeln!(s, "{} {h:?}", i + 1).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("randstop-thresholds v1") {
            return Err(Error::Format("unsupported header".into()));
        }
        let kbar = keyed(
            lines.next().ok_or_else(|| Error::Format("missing kbar line".into()))?,
            "kbar",
        )?;
        let mut levels = Vec::with_capacity(kbar);
        for k in 1..=kbar {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing level {k}")))?;
            let mut it = line.split_whitespace();
            let idx = it.next().and_then(|v| v.parse::<usize>().ok());
            let h = it.next().and_then(|v| v.parse::<f64>().ok());
            match (idx, h, it.next()) {
                (Some(i), Some(h), None) if i == k => levels.push(h),
                _ => return Err(Error::Format(format!("bad level line `{line}`"))),
            }
        }
        Self::new(levels)
    }
}

/// Exact empirical maximizer of the threshold objective at one level.
///
/// `now[n]` is the reward at the level, `later[n]` the reward collected when
/// continuing. Candidates are the distinct positive values of `now` and
/// `+inf`; ties go to the larger threshold.
pub fn best_threshold(now: &[f64], later: &[f64]) -> f64 {
    debug_assert_eq!(now.len(), later.len());
    let mut order: Vec<usize> = (0..now.len()).filter(|&n| now[n] > 0.0).collect();
    order.sort_by(|&a, &b| now[b].total_cmp(&now[a]));
    // objective relative to never stopping: sum of (now - later) over stopped paths
    let mut best_h = f64::INFINITY;
    let mut best_gain = 0.0;
    let mut gain = 0.0;
    let mut i = 0;
    while i < order.len() {
        let h = now[order[i]];
        while i < order.len() && now[order[i]] == h {
            gain += now[order[i]] - later[order[i]];
            i += 1;
        }
        if gain > best_gain {
            best_gain = gain;
            best_h = h;
        }
    }
    best_h
}

/// Backward fit of a threshold rule on training grids that start at the root.
pub fn fit_andersen_thresholds(grids: &[RandomTimeGrid], kbar: usize) -> Result<ThresholdVector> {
    if grids.len() < 2 {
        return Err(invalid("grids", "need at least two training paths"));
    }
    if kbar == 0 {
        return Err(invalid("kbar", "must be at least 1"));
    }
    for g in grids {
        if g.first_index() != 0 {
            return Err(invalid("grids", "training grids must start at the root"));
        }
        if !g.passed_horizon() && g.end_index() <= kbar {
            return Err(invalid("grids", "grid ends before kbar without passing the horizon"));
        }
    }
    let mut later: Vec<f64> = grids.iter().map(|g| g.payoff(kbar)).collect();
    let mut levels = vec![0.0; kbar];
    let mut now = vec![0.0; grids.len()];
    for k in (1..kbar).rev() {
        for (u, g) in now.iter_mut().zip(grids) {
            *u = g.payoff(k);
        }
        let h = best_threshold(&now, &later);
        for (l, &u) in later.iter_mut().zip(&now) {
            if u >= h {
                *l = u;
            }
        }
        levels[k - 1] = h;
    }
    ThresholdVector::new(levels)
}

/// Primal value of a threshold rule on fresh antithetic paths.
pub fn evaluate_threshold_policy<P: EventProcess + ?Sized>(
    process: &P,
    thresholds: &ThresholdVector,
    n_paths: usize,
    stream: &RngStream,
) -> Result<MonteCarloEstimate> {
    evaluate_rule(process, thresholds, n_paths, stream)
}

/// Settings for [`improve_one_step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImprovementConfig {
    /// Number of future candidate stop indices compared at each step.
    pub window: usize,
    /// Outer paths, even.
    pub outer: usize,
    /// Sub-simulated continuations per decision, even.
    pub sub: usize,
}

/// Value of the one-step improvement of a grid-decidable rule.
///
/// Along each outer path the improved rule stops at the first index `j` whose
/// reward is at least every sub-simulated value of following the input rule
/// from an index in `j ..= min(j + window, kbar)`. One batch of resumed
/// sub-paths serves every index in the window. Streams `outer` and `sub` must
/// carry distinct purposes.
pub fn improve_one_step<P, R>(
    process: &P,
    input: &R,
    cfg: ImprovementConfig,
    outer: &RngStream,
    sub: &RngStream,
) -> Result<MonteCarloEstimate>
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    if cfg.window == 0 {
        return Err(invalid("window", "must be at least 1"));
    }
    for (name, n) in [("outer", cfg.outer), ("sub", cfg.sub)] {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(invalid(name, "must be even and at least 2"));
        }
    }
    if outer.lane.purpose == sub.lane.purpose {
        return Err(invalid("sub", "sub-path stream must differ from the outer stream"));
    }
    let pairs: Vec<f64> = (0..(cfg.outer / 2) as u64)
        .into_par_iter()
        .map(|i| {
            let mut total = 0.0;
            for anti in [false, true] {
                let lane = 2 * i + anti as u64;
                let w = Walker::from_root(process, outer.path(i).draws(anti));
                total += improved_path(process, input, cfg, w, &sub.path(lane));
            }
            0.5 * total
        })
        .collect();
    Ok(MonteCarloEstimate::from_pairs(&pairs))
}

fn improved_path<P, R>(process: &P, input: &R, cfg: ImprovementConfig, mut w: Walker<'_, P>, sub: &RngStream) -> f64
where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    let horizon = process.horizon();
    let kbar = input.kbar();
    let mut values = Vec::new();
    loop {
        let z = w.step();
        let j = w.index();
        if j >= kbar || w.tau() > horizon {
            return z;
        }
        let last = (j + cfg.window).min(kbar);
        window_values(process, input, cfg.sub, &w, last, &sub.exercise(j as u64), &mut values);
        // values[k - j - 1] estimates the input rule's value when started at k > j
        let inner_stops = decide(input, horizon, j, w.tau(), w.state(), z);
        let value_j = if inner_stops { z } else { values[0] };
        let best = values.iter().copied().fold(value_j, f64::max);
        if z >= best {
            return z;
        }
    }
}

/// Sub-simulated values of the input rule started at `j + 1 ..= last`.
fn window_values<P, R>(
    process: &P,
    input: &R,
    n_sub: usize,
    at: &Walker<'_, P>,
    last: usize,
    stream: &RngStream,
    out: &mut Vec<f64>,
) where
    P: EventProcess + ?Sized,
    R: StopRule + ?Sized,
{
    let horizon = process.horizon();
    let j = at.index();
    out.clear();
    out.resize(last - j, 0.0);
    for m in 0..(n_sub / 2) as u64 {
        for anti in [false, true] {
            let mut w = Walker::from_point(process, j, at.tau(), at.state(), stream.sub(m).draws(anti));
            let mut pending = j + 1;
            while pending <= last {
                let u = w.step();
                let idx = w.index();
                if decide(input, horizon, idx, w.tau(), w.state(), u) {
                    for slot in &mut out[pending - j - 1..idx.min(last) - j] {
                        *slot += u;
                    }
                    pending = idx + 1;
                }
            }
        }
    }
    let scale = 1.0 / n_sub as f64;
    for v in out.iter_mut() {
        *v *= scale;
    }
}
