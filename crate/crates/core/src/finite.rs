//! Finite layered Markov chains with exact dynamic programming.
//!
//! Exercise opportunity `k` happens at time `k` in one of finitely many
//! states, so every conditional expectation is a finite sum. The chain is also
//! an [`EventProcess`], which lets the Monte Carlo engines run on a problem
//! whose answers are known exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::lsmc::{decide, StopRule};
use crate::pathgen::{EventProcess, RandomTimeGrid};
use crate::regress::FeatureMap;
use crate::rng::Draws;

/// Chain on states `0..states` with transitions between consecutive indices
/// and rewards at indices `1..=kbar`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteChain {
    states: usize,
    initial: [f64; 1],
    /// `transitions[k]` is the row-major matrix from index `k` to `k + 1`.
    transitions: Vec<Vec<f64>>,
    /// `rewards[k][s]`; the root row is zero.
    rewards: Vec<Vec<f64>>,
}

impl FiniteChain {
    pub fn new(states: usize, initial: usize, transitions: Vec<Vec<f64>>, rewards: Vec<Vec<f64>>) -> Result<Self> {
        if states == 0 || initial >= states {
            return Err(invalid("initial", "must name one of the states"));
        }
        if transitions.is_empty() {
            return Err(invalid("transitions", "need at least one step"));
        }
        if rewards.len() != transitions.len() + 1 {
            return Err(invalid("rewards", "one reward row per index including the root"));
        }
        for p in &transitions {
            if p.len() != states * states {
                return Err(invalid("transitions", "each matrix must be states x states"));
            }
            for row in p.chunks(states) {
                let total: f64 = row.iter().sum();
                if row.iter().any(|&q| q.is_nan() || q < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(invalid("transitions", "rows must be probability vectors"));
                }
            }
        }
        for r in &rewards {
            if r.len() != states || r.iter().any(|&z| !(z >= 0.0 && z.is_finite())) {
                return Err(invalid("rewards", "rows must hold one finite non-negative reward per state"));
            }
        }
        if rewards[0].iter().any(|&z| z != 0.0) {
            return Err(invalid("rewards", "the root reward must be zero"));
        }
        Ok(Self {
            states,
            initial: [initial as f64],
            transitions,
            rewards,
        })
    }

    /// Random chain with dense transitions; about a fifth of the rewards are zero.
    pub fn random(states: usize, kbar: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transitions = (0..kbar)
            .map(|_| {
                let mut p: Vec<f64> = (0..states * states).map(|_| rng.random::<f64>() + 0.05).collect();
                for row in p.chunks_mut(states) {
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|q| *q /= total);
                    // absorb rounding so rows sum to one
                    let drift: f64 = 1.0 - row.iter().sum::<f64>();
                    row[0] += drift;
                }
                p
            })
            .collect();
        let rewards = (0..=kbar)
            .map(|k| {
                (0..states)
                    .map(|_| {
                        let z = rng.random::<f64>();
                        if k == 0 || z < 0.2 {
                            0.0
                        } else {
                            z
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(states, 0, transitions, rewards)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn kbar(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial(&self) -> usize {
        self.initial[0] as usize
    }

    pub fn reward_at(&self, k: usize, s: usize) -> f64 {
        self.rewards.get(k).map_or(0.0, |r| r[s])
    }

    pub fn transition(&self, k: usize, from: usize, to: usize) -> f64 {
        self.transitions[k][from * self.states + to]
    }

    /// `E[v(X_(k+1)) | X_k = s]` for every `s`.
    fn expect_next(&self, k: usize, v: &[f64]) -> Vec<f64> {
        self.transitions[k]
            .chunks(self.states)
            .map(|row| row.iter().zip(v).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// Optimal values `V_k(s)` for `k = 0..=kbar`; `V_0` is the value of the problem.
    pub fn snell_envelope(&self) -> Vec<Vec<f64>> {
        let kbar = self.kbar();
        let mut v = vec![Vec::new(); kbar + 1];
        v[kbar] = self.rewards[kbar].clone();
        for k in (0..kbar).rev() {
            let c = self.expect_next(k, &v[k + 1]);
            v[k] = if k == 0 {
                c
            } else {
                c.iter().zip(&self.rewards[k]).map(|(c, z)| c.max(*z)).collect()
            };
        }
        v
    }

    /// Exact continuation values `C_k(s) = E[V_(k+1) | X_k = s]` for `k < kbar`.
    pub fn continuation_values(&self) -> Vec<Vec<f64>> {
        let v = self.snell_envelope();
        (0..self.kbar()).map(|k| self.expect_next(k, &v[k + 1])).collect()
    }

    /// Value `W_k(s)` of following `rule` from index `k` (first stop at or after `k`).
    pub fn policy_values<R: StopRule + ?Sized>(&self, rule: &R) -> Vec<Vec<f64>> {
        let kbar = self.kbar();
        let horizon = self.horizon();
        let mut w = vec![Vec::new(); kbar + 1];
        w[kbar] = self.rewards[kbar].clone();
        for k in (0..kbar).rev() {
            let c = self.expect_next(k, &w[k + 1]);
            w[k] = (0..self.states)
                .map(|s| {
                    let z = self.rewards[k][s];
                    if decide(rule, horizon, k, k as f64, &[s as f64], z) {
                        z
                    } else {
                        c[s]
                    }
                })
                .collect();
        }
        w
    }

    /// Stop wherever the reward reaches the continuation value.
    pub fn optimal_rule(&self) -> TableRule {
        let c = self.continuation_values();
        let kbar = self.kbar();
        let stop = (0..=kbar)
            .map(|k| {
                (0..self.states)
                    .map(|s| k == kbar || (k > 0 && self.rewards[k][s] >= c[k][s]))
                    .collect()
            })
            .collect();
        TableRule { stop }
    }

    /// Stop at the first opportunity.
    pub fn stop_immediately(&self) -> TableRule {
        TableRule {
            stop: vec![vec![true; self.states]; self.kbar() + 1],
        }
    }

    /// One-step improvement of `rule` with exact conditional expectations.
    ///
    /// The improved rule stops at `j` when the reward is at least the value of
    /// following `rule` from any index in `j ..= min(j + window, kbar)`.
    pub fn improve<R: StopRule + ?Sized>(&self, rule: &R, window: usize) -> TableRule {
        let kbar = self.kbar();
        let w = self.policy_values(rule);
        let mut stop = vec![vec![true; self.states]; kbar + 1];
        stop[0] = vec![false; self.states];
        for j in 1..kbar {
            let mut best = w[j].clone();
            #[allow(clippy::needless_range_loop)]
            for k in j + 1..=(j + window).min(kbar) {
                let mut q = w[k].clone();
                for i in (j..k).rev() {
                    q = self.expect_next(i, &q);
                }
                for (b, x) in best.iter_mut().zip(q) {
                    *b = b.max(x);
                }
            }
            for s in 0..self.states {
                stop[j][s] = self.rewards[j][s] >= best[s];
            }
        }
        TableRule { stop }
    }

    /// Every path of positive probability as a grid, with its probability.
    pub fn enumerate_grids(&self) -> Result<(Vec<RandomTimeGrid>, Vec<f64>)> {
        let kbar = self.kbar();
        let horizon = self.horizon();
        let mut grids = Vec::new();
        let mut weights = Vec::new();
        let mut path = vec![self.initial()];
        let mut probs = vec![1.0];
        self.extend(&mut path, &mut probs, &mut |path, prob| {
            let events: Vec<(f64, Vec<f64>, f64)> = path
                .iter()
                .enumerate()
                .map(|(k, &s)| (k as f64, vec![s as f64], self.reward_at(k, s)))
                .collect();
            grids.push(RandomTimeGrid::from_events(horizon, 1, &events));
            weights.push(prob);
        });
        debug_assert!(grids.iter().all(|g| g.as_ref().map_or(true, |g| g.end_index() == kbar + 1)));
        Ok((grids.into_iter().collect::<Result<_>>()?, weights))
    }

    fn extend(&self, path: &mut Vec<usize>, probs: &mut Vec<f64>, emit: &mut dyn FnMut(&[usize], f64)) {
        let k = path.len() - 1;
        let p = *probs.last().unwrap();
        if k == self.kbar() {
            emit(path, p);
            return;
        }
        let from = path[k];
        for to in 0..self.states {
            let q = self.transition(k, from, to);
            if q > 0.0 {
                path.push(to);
                probs.push(p * q);
                self.extend(path, probs, emit);
                path.pop();
                probs.pop();
            }
        }
    }
}

impl EventProcess for FiniteChain {
    fn dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> f64 {
        self.kbar() as f64
    }

    fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    fn reward(&self, tau: f64, state: &[f64]) -> f64 {
        if tau > self.horizon() {
            return 0.0;
        }
        self.reward_at(tau as usize, state[0] as usize)
    }

    fn advance(&self, tau: &mut f64, state: &mut [f64], draws: &mut Draws) {
        let k = *tau as usize;
        if k < self.kbar() {
            let from = state[0] as usize;
            let u = draws.uniform();
            let mut acc = 0.0;
            let mut next = self.states - 1;
            for to in 0..self.states {
                acc += self.transition(k, from, to);
                if u < acc {
                    next = to;
                    break;
                }
            }
            state[0] = next as f64;
        }
        *tau += 1.0;
    }
}

/// Stop decisions tabulated by index and state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRule {
    /// `stop[k][s]` for `k = 0..=kbar`.
    pub stop: Vec<Vec<bool>>,
}

impl StopRule for TableRule {
    fn kbar(&self) -> usize {
        self.stop.len() - 1
    }

    fn stops_at(&self, k: usize, _tau: f64, state: &[f64], _payoff: f64) -> bool {
        self.stop[k][state[0] as usize]
    }
}

/// One indicator per state; spans every function of the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndicatorBasis {
    pub states: usize,
}

impl FeatureMap for IndicatorBasis {
    fn feature_count(&self) -> usize {
        self.states
    }

    fn fill(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[x[0] as usize] = 1.0;
    }
}
