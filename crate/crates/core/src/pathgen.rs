//! Random time grids.
//!
//! A grid is the sequence of exercise opportunities `(k, tau_k, X_{tau_k})`
//! together with the cached rewards `U_k = Z(tau_k, X_{tau_k})`. Index 0 is the
//! root `(0, 0, x0)`. Grids end at the first opportunity past the horizon (all
//! later rewards vanish) or at a hard cap on the index.

use crate::error::{invalid, Result};
use crate::model::{ArrivalSpec, JumpSource, MarketModel, PayoffSpec};
use crate::rng::{Draws, RngStream};

/// A Markov process observed at its exercise opportunities.
///
/// `(tau, state)` must be a Markov chain: the law of the next opportunity may
/// depend on the current time and state only.
pub trait EventProcess: Sync {
    fn dim(&self) -> usize;

    fn horizon(&self) -> f64;

    fn initial_state(&self) -> &[f64];

    fn reward(&self, tau: f64, state: &[f64]) -> f64;

    /// Moves `(tau, state)` to the next exercise opportunity. Once the returned
    /// time exceeds the horizon the exact value of `tau` is immaterial.
    fn advance(&self, tau: &mut f64, state: &mut [f64], draws: &mut Draws);
}

/// Market model, arrival mechanism and reward bundled into one stopping problem.
#[derive(Clone, Debug, PartialEq)]
pub struct StoppingProblem {
    pub model: MarketModel,
    pub arrivals: ArrivalSpec,
    pub payoff: PayoffSpec,
}

impl StoppingProblem {
    pub fn new(model: MarketModel, arrivals: ArrivalSpec, payoff: PayoffSpec) -> Result<Self> {
        if (arrivals.horizon - payoff.maturity()).abs() > 1e-12 {
            return Err(invalid(
                "horizon",
                "arrival horizon and payoff maturity must agree",
            ));
        }
        if matches!(payoff, PayoffSpec::Power { .. }) && model.asset_count() != 1 {
            return Err(invalid("payoff", "power payoff needs a single asset"));
        }
        Ok(Self {
            model,
            arrivals,
            payoff,
        })
    }

    #[inline]
    fn diffuse(&self, state: &mut [f64], dt: f64, draws: &mut Draws) {
        let independent = self.model.jump_source() == JumpSource::Independent;
        for (m, x) in state.iter_mut().enumerate() {
            let jumps = if independent {
                draws.poisson(self.model.jump_rate()[m] * dt)
            } else {
                0
            };
            let xi = draws.normal();
            *x = self.model.step_asset(m, *x, dt, xi, jumps);
        }
    }

    #[inline]
    fn arrival_jump(&self, state: &mut [f64]) {
        if self.model.jump_source() == JumpSource::Arrivals {
            for (m, x) in state.iter_mut().enumerate() {
                *x *= 1.0 + self.model.jump_size()[m];
            }
        }
    }
}

impl EventProcess for StoppingProblem {
    fn dim(&self) -> usize {
        self.model.asset_count()
    }

    fn horizon(&self) -> f64 {
        self.arrivals.horizon
    }

    fn initial_state(&self) -> &[f64] {
        self.model.x0()
    }

    #[inline]
    fn reward(&self, tau: f64, state: &[f64]) -> f64 {
        self.payoff.value(tau, state)
    }

    fn advance(&self, tau: &mut f64, state: &mut [f64], draws: &mut Draws) {
        let rate = self.arrivals.rate;
        let horizon = self.arrivals.horizon;
        // Candidates arrive at the dominating rate; a candidate is kept iff the
        // gate is open at that instant. Without a barrier every candidate is kept.
        loop {
            let gap = draws.exp1() / rate;
            *tau += gap;
            self.diffuse(state, gap, draws);
            if self.arrivals.gate_open(state) {
                self.arrival_jump(state);
                return;
            }
            if *tau > horizon {
                return;
            }
        }
    }
}

/// A point on a grid from which simulation can be resumed.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub tau: f64,
    pub state: Vec<f64>,
}

/// One simulated sequence of exercise opportunities.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomTimeGrid {
    first_index: usize,
    dim: usize,
    horizon: f64,
    tau: Vec<f64>,
    states: Vec<f64>,
    payoff: Vec<f64>,
}

impl RandomTimeGrid {
    fn with_capacity(first_index: usize, dim: usize, horizon: f64, cap: usize) -> Self {
        Self {
            first_index,
            dim,
            horizon,
            tau: Vec::with_capacity(cap),
            states: Vec::with_capacity(cap * dim),
            payoff: Vec::with_capacity(cap),
        }
    }

    /// Grid from explicit events starting at the root, for enumerated models.
    pub fn from_events(horizon: f64, dim: usize, events: &[(f64, Vec<f64>, f64)]) -> Result<Self> {
        if events.is_empty() {
            return Err(invalid("events", "need at least the root"));
        }
        let mut grid = Self::with_capacity(0, dim, horizon, events.len());
        let mut last = f64::NEG_INFINITY;
        for (tau, state, payoff) in events {
            if state.len() != dim {
                return Err(invalid("events", "state dimension mismatch"));
            }
            if *tau < last {
                return Err(invalid("events", "times must be non-decreasing"));
            }
            last = *tau;
            grid.push(*tau, state, *payoff);
        }
        Ok(grid)
    }

    fn push(&mut self, tau: f64, state: &[f64], payoff: f64) {
        self.tau.push(tau);
        self.states.extend_from_slice(state);
        self.payoff.push(payoff);
    }

    /// Global index of the first stored event.
    pub fn first_index(&self) -> usize {
        self.first_index
    }

    /// One past the global index of the last stored event.
    pub fn end_index(&self) -> usize {
        self.first_index + self.tau.len()
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, k: usize) -> bool {
        k >= self.first_index && k < self.end_index()
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.tau[k - self.first_index]
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let i = k - self.first_index;
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// Reward at index `k`; zero for indices beyond the stored events, which
    /// all lie past the horizon.
    pub fn payoff(&self, k: usize) -> f64 {
        if self.contains(k) {
            self.payoff[k - self.first_index]
        } else {
            0.0
        }
    }

    pub fn point(&self, k: usize) -> GridPoint {
        GridPoint {
            index: k,
            tau: self.tau(k),
            state: self.state(k).to_vec(),
        }
    }

    /// Number of stored events with `tau <= T` (excluding the root).
    pub fn arrivals_before_horizon(&self) -> usize {
        (self.first_index..self.end_index())
            .filter(|&k| k > 0 && self.tau(k) <= self.horizon)
            .count()
    }

    /// First stored index past the horizon, or the end index.
    pub fn natural_end(&self) -> usize {
        (self.first_index..self.end_index())
            .find(|&k| self.tau(k) > self.horizon)
            .unwrap_or_else(|| self.end_index())
    }

    /// Whether the grid reached the horizon (as opposed to the index cap).
    pub fn passed_horizon(&self) -> bool {
        self.tau.last().is_some_and(|&t| t > self.horizon)
    }

    /// `U_k` over `first_index..end_index`.
    pub fn payoffs(&self) -> &[f64] {
        &self.payoff
    }
}

/// Lazily stepped grid, used where paths are consumed once.
pub struct Walker<'p, P: EventProcess + ?Sized> {
    process: &'p P,
    draws: Draws,
    index: usize,
    tau: f64,
    state: Vec<f64>,
    payoff: f64,
}

impl<'p, P: EventProcess + ?Sized> Walker<'p, P> {
    pub fn from_root(process: &'p P, draws: Draws) -> Self {
        let state = process.initial_state().to_vec();
        let payoff = process.reward(0.0, &state);
        Self {
            process,
            draws,
            index: 0,
            tau: 0.0,
            state,
            payoff,
        }
    }

    pub fn from_point(process: &'p P, index: usize, tau: f64, state: &[f64], draws: Draws) -> Self {
        let payoff = process.reward(tau, state);
        Self {
            process,
            draws,
            index,
            tau,
            state: state.to_vec(),
            payoff,
        }
    }

    /// Advances to the next opportunity and returns its reward.
    #[inline]
    pub fn step(&mut self) -> f64 {
        self.process
            .advance(&mut self.tau, &mut self.state, &mut self.draws);
        self.index += 1;
        self.payoff = self.process.reward(self.tau, &self.state);
        self.payoff
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn payoff(&self) -> f64 {
        self.payoff
    }

    pub fn past_horizon(&self) -> bool {
        self.tau > self.process.horizon()
    }
}

/// Simulates a grid from the root up to `max_index` or the first event past the horizon.
pub fn sample_grid<P: EventProcess + ?Sized>(
    process: &P,
    max_index: usize,
    stream: &RngStream,
    antithetic: bool,
) -> Result<RandomTimeGrid> {
    if max_index == 0 {
        return Err(invalid("max_index", "must be at least 1"));
    }
    let walker = Walker::from_root(process, stream.draws(antithetic));
    Ok(collect(walker, max_index, true))
}

/// Continues a grid from `from`, producing indices `from.index + 1 ..= from.index + extra`
/// (fewer if the horizon is passed first).
pub fn resume<P: EventProcess + ?Sized>(
    process: &P,
    from: &GridPoint,
    extra_indices: usize,
    stream: &RngStream,
    antithetic: bool,
) -> Result<RandomTimeGrid> {
    if extra_indices == 0 {
        return Err(invalid("extra_indices", "must be at least 1"));
    }
    if from.state.len() != process.dim() {
        return Err(invalid("from", "state dimension mismatch"));
    }
    let walker = Walker::from_point(
        process,
        from.index,
        from.tau,
        &from.state,
        stream.draws(antithetic),
    );
    Ok(collect(walker, from.index + extra_indices, false))
}

fn collect<P: EventProcess + ?Sized>(
    mut walker: Walker<'_, P>,
    max_index: usize,
    keep_start: bool,
) -> RandomTimeGrid {
    let dim = walker.process.dim();
    let horizon = walker.process.horizon();
    let start = walker.index();
    let first = if keep_start { start } else { start + 1 };
    let mut grid = RandomTimeGrid::with_capacity(first, dim, horizon, 16);
    if keep_start {
        grid.push(walker.tau(), walker.state(), walker.payoff());
    }
    if walker.past_horizon() {
        // Nothing left to simulate; a resumed suffix still reports one dead event.
        if !keep_start {
            grid.push(walker.tau(), walker.state(), 0.0);
        }
        return grid;
    }
    while walker.index() < max_index {
        let u = walker.step();
        grid.push(walker.tau(), walker.state(), u);
        if walker.past_horizon() {
            break;
        }
    }
    grid
}

/// Two grids on one lane: shared arrival and jump draws, mirrored Gaussians.
pub fn antithetic_pair<P: EventProcess + ?Sized>(
    process: &P,
    max_index: usize,
    stream: &RngStream,
) -> Result<(RandomTimeGrid, RandomTimeGrid)> {
    Ok((
        sample_grid(process, max_index, stream, false)?,
        sample_grid(process, max_index, stream, true)?,
    ))
}
