//! Exactness on finite chains, where every expectation is a finite sum.

use proptest::prelude::*;
use randstop::dual::{dual_paths, DualConfig};
use randstop::finite::{FiniteChain, IndicatorBasis, TableRule};
use randstop::improve::{improve_one_step, ImprovementConfig};
use randstop::lsmc::{evaluate_rule, train_with, StopRule};
use randstop::rng::{Purpose, RngStream};

/// Optimal value from `(k, s)` by direct recursion over successor states.
fn oracle(chain: &FiniteChain, k: usize, s: usize) -> f64 {
    let z = chain.reward_at(k, s);
    if k == chain.kbar() {
        return z;
    }
    let wait: f64 = (0..chain.states())
        .map(|t| chain.transition(k, s, t) * oracle(chain, k + 1, t))
        .sum();
    if k == 0 {
        wait
    } else {
        z.max(wait)
    }
}

/// Expected continuation `E[V_(k+1) | X_k = s]` by the same recursion.
fn oracle_continuation(chain: &FiniteChain, k: usize, s: usize) -> f64 {
    (0..chain.states())
        .map(|t| chain.transition(k, s, t) * oracle(chain, k + 1, t))
        .sum()
}

/// Three states, two deterministic opportunities.
fn small_chain() -> FiniteChain {
    FiniteChain::new(
        3,
        1,
        vec![
            vec![0.2, 0.5, 0.3, 0.3, 0.4, 0.3, 0.1, 0.1, 0.8],
            vec![0.6, 0.2, 0.2, 0.25, 0.5, 0.25, 0.0, 0.5, 0.5],
        ],
        vec![vec![0.0; 3], vec![0.0, 1.0, 2.5], vec![3.0, 1.0, 0.0]],
    )
    .unwrap()
}

fn chains() -> Vec<FiniteChain> {
    let mut out = vec![small_chain()];
    for seed in 0..6 {
        out.push(FiniteChain::random(3 + seed as usize % 3, 3 + seed as usize % 2, seed).unwrap());
    }
    out
}

#[test]
fn snell_envelope_matches_recursion() {
    for chain in chains() {
        let v = chain.snell_envelope();
        for (k, row) in v.iter().enumerate() {
            for (s, &x) in row.iter().enumerate() {
                assert!((x - oracle(&chain, k, s)).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn lsmc_with_spanning_basis_is_exact() {
    for chain in chains() {
        let (grids, weights) = chain.enumerate_grids().unwrap();
        let basis = IndicatorBasis { states: chain.states() };
        let model = train_with(&grids, chain.kbar(), basis, Some(&weights)).unwrap();
        for k in 0..chain.kbar() {
            for s in 0..chain.states() {
                let fitted = model.continuation(k, k as f64, &[s as f64]);
                if k == 0 && s != chain.initial() {
                    continue;
                }
                // states never reached carry no information
                let reachable = grids.iter().any(|g| g.state(k)[0] as usize == s);
                if reachable {
                    let want = oracle_continuation(&chain, k, s);
                    assert!((fitted - want).abs() < 1e-10, "k {k} s {s}: {fitted} vs {want}");
                }
            }
        }
        let value = chain.policy_values(&model)[0][chain.initial()];
        let exact = oracle(&chain, 0, chain.initial());
        assert!((value - exact).abs() < 1e-10, "{value} vs {exact}");
    }
}

#[test]
fn enumeration_reproduces_the_law_of_the_chain() {
    let chain = small_chain();
    let (grids, weights) = chain.enumerate_grids().unwrap();
    assert_eq!(grids.len(), 9 - 1, "one zero-probability transition is skipped");
    let total: f64 = weights.iter().sum();
    assert!((total - 1.0).abs() < 1e-14);
    let mean_u2: f64 = grids.iter().zip(&weights).map(|(g, w)| w * g.payoff(2)).sum();
    let direct: f64 = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| chain.transition(0, 1, a) * chain.transition(1, a, b) * chain.reward_at(2, b))
        .sum();
    assert!((mean_u2 - direct).abs() < 1e-14);
}

#[test]
fn monte_carlo_primal_of_exact_rule_is_unbiased() {
    let chain = FiniteChain::random(4, 4, 11).unwrap();
    let rule = chain.optimal_rule();
    let est = evaluate_rule(&chain, &rule, 200_000, &RngStream::new(3, Purpose::Test(1))).unwrap();
    let exact = oracle(&chain, 0, chain.initial());
    assert!((est.mean - exact).abs() < 4.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn dual_of_exact_rule_is_tight() {
    for seed in [1, 2, 3] {
        let chain = FiniteChain::random(4, 4, seed).unwrap();
        let rule = chain.optimal_rule();
        let exact = oracle(&chain, 0, chain.initial());
        let cfg = DualConfig { outer: 400, sub: 4000 };
        let paths = dual_paths(
            &chain,
            &rule,
            cfg,
            &RngStream::new(seed, Purpose::DualOuter),
            &RngStream::new(seed, Purpose::DualSub),
        )
        .unwrap();
        let stats: Vec<f64> = paths.iter().map(|p| p.statistic).collect();
        let n = stats.len() as f64;
        let mean = stats.iter().sum::<f64>() / n;
        let sd = (stats.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        assert!((mean - exact).abs() <= 3.0 * se.max(1e-3), "seed {seed}: {mean} vs {exact} (se {se})");
        // sub-simulation noise only: the stopped reward itself varies by O(0.3)
        assert!(sd < 0.05, "seed {seed}: pathwise sd {sd}");
    }
}

#[test]
fn dual_with_poor_rule_still_bounds_from_above() {
    let chain = FiniteChain::random(4, 4, 8).unwrap();
    let rule = chain.stop_immediately();
    let exact = oracle(&chain, 0, chain.initial());
    let paths = dual_paths(
        &chain,
        &rule,
        DualConfig { outer: 2000, sub: 400 },
        &RngStream::new(8, Purpose::DualOuter),
        &RngStream::new(8, Purpose::DualSub),
    )
    .unwrap();
    let stats: Vec<f64> = paths.iter().map(|p| p.statistic).collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    assert!(mean > exact - 0.01, "{mean} vs {exact}");
}

fn is_exact(chain: &FiniteChain, rule: &TableRule) -> bool {
    let w = chain.policy_values(rule);
    (1..=chain.kbar()).all(|k| (0..chain.states()).all(|s| (w[k][s] - oracle(chain, k, s)).abs() < 1e-12))
        && (w[0][chain.initial()] - oracle(chain, 0, chain.initial())).abs() < 1e-12
}

#[test]
fn iterated_improvement_reaches_the_snell_envelope() {
    for chain in chains() {
        let mut rule = chain.stop_immediately();
        let mut rounds = 0;
        while !is_exact(&chain, &rule) {
            rule = chain.improve(&rule, chain.kbar());
            rounds += 1;
            assert!(rounds <= chain.kbar(), "not exact after {rounds} rounds");
        }
    }
}

#[test]
fn improvement_never_hurts_and_dominates_the_reward() {
    for chain in chains() {
        let base = chain.stop_immediately();
        let before = chain.policy_values(&base);
        for window in 1..=chain.kbar() {
            let improved = chain.improve(&base, window);
            let after = chain.policy_values(&improved);
            for j in 1..=chain.kbar() {
                for s in 0..chain.states() {
                    assert!(after[j][s] >= before[j][s] - 1e-14);
                    assert!(after[j][s] >= chain.reward_at(j, s));
                }
            }
        }
    }
}

#[test]
fn wider_windows_improve_more() {
    for chain in chains() {
        let base = chain.stop_immediately();
        let mut last = f64::NEG_INFINITY;
        for window in 1..=chain.kbar() {
            let v = chain.policy_values(&chain.improve(&base, window))[0][chain.initial()];
            assert!(v >= last - 1e-14);
            last = v;
        }
    }
}

#[test]
fn nested_improvement_estimates_the_exact_improved_rule() {
    let chain = FiniteChain::random(3, 4, 21).unwrap();
    let base = chain.stop_immediately();
    let exact = chain.policy_values(&chain.improve(&base, chain.kbar()))[0][chain.initial()];
    let est = improve_one_step(
        &chain,
        &base,
        ImprovementConfig {
            window: chain.kbar(),
            outer: 20_000,
            sub: 2000,
        },
        &RngStream::new(4, Purpose::ImproveOuter),
        &RngStream::new(4, Purpose::ImproveSub),
    )
    .unwrap();
    // finite sub-batches make a few decisions wrong; allow a small one-sided slack
    assert!(est.mean <= exact + 4.0 * est.std_error, "{est:?} vs {exact}");
    assert!(est.mean >= exact - 4.0 * est.std_error - 0.01, "{est:?} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_rule_attains_the_envelope(seed in 0u64..10_000, states in 2usize..5, kbar in 1usize..5) {
        let chain = FiniteChain::random(states, kbar, seed).unwrap();
        let rule = chain.optimal_rule();
        prop_assert_eq!(rule.kbar(), kbar);
        let w = chain.policy_values(&rule);
        let v = chain.snell_envelope();
        prop_assert!((w[0][0] - v[0][0]).abs() < 1e-12);
        prop_assert!(v[0][0] + 1e-12 >= chain.policy_values(&chain.stop_immediately())[0][0]);
    }
}
