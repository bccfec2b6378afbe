//! Exit criteria. Prints one PASS/FAIL line per criterion and fails the
//! target if any criterion fails.
//!
//! Simulation criteria run the shipped configurations at desk scale with
//! their shipped seeds.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use randstop::benchmark::{value_closed_form, BenchmarkParams, Rights};
use randstop::dual::{dual_paths, DualConfig};
use randstop::finite::{FiniteChain, IndicatorBasis};
use randstop::horizon::{select_truncation, tail_estimates};
use randstop::lsmc::{train_with, MonteCarloEstimate};
use randstop::rng::{derive_seed, Purpose, RngStream};
use randstop_cli::config::{parse_pairs, ExperimentConfig};
use randstop_cli::output::table_csv;
use randstop_cli::run::CellResult;
use randstop_cli::{run, Report};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str, overrides: &[(&str, &str)]) -> ExperimentConfig {
    let text = std::fs::read_to_string(config_path(name)).expect("shipped config");
    let mut pairs: BTreeMap<String, String> = parse_pairs(&text).expect("shipped config parses");
    pairs.insert("scale".into(), "desk".into());
    for (k, v) in overrides {
        pairs.insert(k.to_string(), v.to_string());
    }
    ExperimentConfig::from_pairs(pairs).expect("shipped config validates")
}

fn cell(report: &Report, x0: f64, lambda: f64) -> &CellResult {
    report
        .cells
        .iter()
        .find(|c| c.x0 == x0 && c.lambda == lambda)
        .expect("cell present")
}

fn est(e: &Option<MonteCarloEstimate>) -> MonteCarloEstimate {
    e.expect("estimate present")
}

fn fmt(e: &MonteCarloEstimate) -> String {
    format!("{:.4} ({:.4})", e.mean, e.std_error)
}

/// Simulation runs shared between criteria.
struct Runs {
    table1: Report,
    table2: Report,
    table4: Report,
    barrier: Vec<(&'static str, Report)>,
}

impl Runs {
    fn new() -> Self {
        let timed = |name: &'static str| {
            let t = Instant::now();
            let r = run(&load(name, &[]));
            eprintln!("ran {name} at desk scale in {:.0} s", t.elapsed().as_secs_f64());
            r
        };
        Self {
            table1: timed("table1_benchmark.conf"),
            table2: timed("table2_maxcall_m1.conf"),
            table4: timed("table4_maxcall_m2_jumps.conf"),
            barrier: vec![
                ("table5", timed("table5_barrier_m1.conf")),
                ("table6", timed("table6_barrier_m2.conf")),
                ("table7", timed("table7_barrier_m5.conf")),
            ],
        }
    }
}

fn table1_params(horizon: f64, rate: f64, mu: f64, jump: f64) -> BenchmarkParams {
    BenchmarkParams::new(mu, 0.2, 2.0, 0.0, rate, jump, horizon).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cases = [
        (table1_params(3.0, 1.0, 0.2, -0.05), Rights::Finite(1), 1.3112),
        (table1_params(3.0, 1.0, 0.2, -0.05), Rights::Finite(3), 1.5250),
        (table1_params(3.0, 1.0, 0.2, -0.05), Rights::Unlimited, 1.5448),
        (table1_params(1.0, 1.0, 0.2, -0.05), Rights::Unlimited, 0.6910),
        (table1_params(3.0, 2.0, 0.5, -0.05), Rights::Unlimited, 6.4685),
        (table1_params(3.0, 1.0, 0.2, 0.0), Rights::Unlimited, 1.9639),
    ];
    let worst = cases
        .iter()
        .map(|(p, k, want)| (value_closed_form(p, *k, 0.0, 1.0).unwrap() - want).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 5e-5 && secs < 1.0,
        format!("largest error {worst:.1e} (limit 5e-5), {secs:.3} s"),
    )
}

fn criterion_2(runs: &Runs) -> Outcome {
    let mut pass = runs.table1.cells.len() == 6;
    let mut parts = Vec::new();
    for c in &runs.table1.cells {
        if c.failure.is_some() {
            pass = false;
            parts.push("failed cell".to_string());
            continue;
        }
        let truth = c.truth.unwrap();
        let (p, d) = (est(&c.primal), est(&c.dual));
        let ok = (p.mean - truth).abs() <= (3.0 * p.std_error).max(0.01)
            && (d.mean - truth).abs() <= (3.0 * d.std_error).max(0.01);
        pass &= ok;
        parts.push(format!("{truth:.4}: {:.4}/{:.4}", p.mean, d.mean));
    }
    outcome(pass, format!("truth: primal/dual {}", parts.join(", ")))
}

fn criterion_3(runs: &Runs) -> Outcome {
    let c = cell(&runs.table2, 100.0, 2.0);
    let (p, d) = (est(&c.primal), est(&c.dual));
    let gap = d.mean - p.mean;
    outcome(
        (p.mean - 7.1100).abs() <= (3.0 * p.std_error).max(0.05) && gap <= 0.06,
        format!("primal {} vs 7.1100, dual {}, gap {gap:.4} (limit 0.06)", fmt(&p), fmt(&d)),
    )
}

fn criterion_4(runs: &Runs) -> Outcome {
    let p = est(&cell(&runs.table4, 100.0, 1.0).primal);
    outcome(
        (p.mean - 11.2297).abs() <= (3.0 * p.std_error).max(0.06),
        format!("primal {} vs 11.2297", fmt(&p)),
    )
}

fn criterion_5(runs: &Runs) -> Outcome {
    let mut reports = vec![("table1", &runs.table1), ("table2", &runs.table2), ("table4", &runs.table4)];
    reports.extend(runs.barrier.iter().map(|(n, r)| (*n, r)));
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for (name, report) in reports {
        for c in &report.cells {
            let (Some(p), Some(d)) = (c.primal, c.dual) else {
                bad.push(format!("{name} x0 {} lambda {} missing", c.x0, c.lambda));
                continue;
            };
            checked += 1;
            // excess of primal over dual in pooled standard errors
            let z = (p.mean - d.mean) / p.pooled_se(&d);
            worst = worst.max(z);
            if z > 3.0 {
                bad.push(format!("{name} x0 {} lambda {}", c.x0, c.lambda));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{checked} cells, largest (primal - dual) / pooled s.e. {worst:.2}; violations: {bad:?}"),
    )
}

fn criterion_6(runs: &Runs) -> Outcome {
    let values: Vec<MonteCarloEstimate> = [1.0, 2.0, 5.0]
        .iter()
        .map(|&l| est(&cell(&runs.table2, 100.0, l).primal))
        .collect();
    let pass = values
        .windows(2)
        .all(|w| w[1].mean >= w[0].mean - 3.0 * w[0].pooled_se(&w[1]));
    let shown: Vec<String> = values.iter().map(fmt).collect();
    outcome(pass, format!("primal at lambda 1, 2, 5: {}", shown.join(" < ")))
}

fn criterion_7(runs: &Runs) -> Outcome {
    let table6 = &runs.barrier[1].1;
    let c = cell(table6, 100.0, 2.0);
    let (a, pi, p) = (est(&c.andersen), est(&c.pi), est(&c.primal));
    let lift = pi.mean - a.mean;
    let need = 3.0 * a.pooled_se(&pi);
    let near = (pi.mean - p.mean).abs() <= 3.0 * pi.pooled_se(&p);
    outcome(
        lift >= need && near,
        format!(
            "andersen {} -> improved {}: lift {lift:.4} vs 3 pooled s.e. {need:.4}; primal {} ({})",
            fmt(&a),
            fmt(&pi),
            fmt(&p),
            if near { "within 3 pooled s.e." } else { "outside 3 pooled s.e." }
        ),
    )
}

/// Exact value from `(k, s)` by recursion over successor states.
fn exact_value(chain: &FiniteChain, k: usize, s: usize) -> f64 {
    let z = chain.reward_at(k, s);
    if k == chain.kbar() {
        return z;
    }
    let wait: f64 = (0..chain.states())
        .map(|t| chain.transition(k, s, t) * exact_value(chain, k + 1, t))
        .sum();
    if k == 0 {
        wait
    } else {
        z.max(wait)
    }
}

fn criterion_8() -> Outcome {
    let chains: Vec<FiniteChain> = (0..4)
        .map(|seed| FiniteChain::random(3 + seed as usize % 2, 4, 100 + seed).unwrap())
        .collect();
    let mut worst_a = 0.0f64;
    let mut dual_ok = true;
    let mut worst_sd = 0.0f64;
    let mut rounds_ok = true;
    let mut worst_c = 0.0f64;
    for (i, chain) in chains.iter().enumerate() {
        let exact = exact_value(chain, 0, chain.initial());

        let (grids, weights) = chain.enumerate_grids().unwrap();
        let model = train_with(&grids, chain.kbar(), IndicatorBasis { states: chain.states() }, Some(&weights)).unwrap();
        worst_a = worst_a.max((chain.policy_values(&model)[0][chain.initial()] - exact).abs());
        for k in 0..chain.kbar() {
            for st in 0..chain.states() {
                // only states some grid visits carry information
                if !grids.iter().any(|g| g.state(k)[0] as usize == st) {
                    continue;
                }
                let want: f64 = (0..chain.states())
                    .map(|t| chain.transition(k, st, t) * exact_value(chain, k + 1, t))
                    .sum();
                worst_a = worst_a.max((model.continuation(k, k as f64, &[st as f64]) - want).abs());
            }
        }

        let paths = dual_paths(
            chain,
            &chain.optimal_rule(),
            DualConfig { outer: 400, sub: 4000 },
            &RngStream::new(i as u64, Purpose::DualOuter),
            &RngStream::new(i as u64, Purpose::DualSub),
        )
        .unwrap();
        let stats: Vec<f64> = paths.iter().map(|p| p.statistic).collect();
        let n = stats.len() as f64;
        let mean = stats.iter().sum::<f64>() / n;
        let sd = (stats.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        dual_ok &= (mean - exact).abs() <= 3.0 * sd / n.sqrt() + 1e-12;
        worst_sd = worst_sd.max(sd);

        let mut rule = chain.stop_immediately();
        let mut rounds = 0;
        loop {
            let v = chain.policy_values(&rule);
            let err = (1..=chain.kbar())
                .flat_map(|k| (0..chain.states()).map(move |s| (k, s)))
                .map(|(k, s)| (v[k][s] - exact_value(chain, k, s)).abs())
                .fold((v[0][chain.initial()] - exact).abs(), f64::max);
            if err < 1e-12 {
                worst_c = worst_c.max(err);
                break;
            }
            if rounds == chain.kbar() {
                rounds_ok = false;
                break;
            }
            rule = chain.improve(&rule, chain.kbar());
            rounds += 1;
        }
    }
    outcome(
        worst_a < 1e-10 && dual_ok && worst_sd < 0.05 && rounds_ok,
        format!(
            "(a) LSMC error {worst_a:.1e}; (b) dual within 3 s.e.: {dual_ok}, pathwise sd {worst_sd:.4}; \
             (c) envelope within kbar rounds: {rounds_ok} (error {worst_c:.1e})"
        ),
    )
}

/// Adaptive Simpson quadrature.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    let left = (m - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + m)) + f(m));
    let right = (b - m) / 6.0 * (f(m) + 4.0 * f(0.5 * (m + b)) + f(b));
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        integrate(f, a, m, 0.5 * tol, depth - 1) + integrate(f, m, b, 0.5 * tol, depth - 1)
    }
}

fn criterion_9() -> Outcome {
    let p = table1_params(3.0, 1.0, 0.2, -0.05);
    let (alpha, lambda) = (p.alpha(), p.lambda());
    let mut worst = 0.0f64;
    for k in 1..=3 {
        for s in [0.5, 1.0, 1.5, p.s_star(), 2.0, 2.5, 3.0] {
            let g = |u: f64| (-alpha * u).exp().max(p.f(k, u));
            let kink = p.s_star().min(s);
            let quad = lambda * (integrate(&g, 0.0, kink, 1e-12, 24) + integrate(&g, kink, s, 1e-12, 24));
            worst = worst.max(((p.f(k + 1, s) - quad) / quad).abs());
        }
    }
    outcome(worst < 1e-8, format!("largest relative error {worst:.1e} (limit 1e-8)"))
}

fn criterion_10() -> Outcome {
    let csvs: Vec<String> = ["1", "4", "8"]
        .iter()
        .map(|t| {
            let cfg = load("table1_benchmark.conf", &[("threads", t)]);
            table_csv(&run(&cfg), false)
        })
        .collect();
    let same = csvs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!("benchmark table CSV at 1, 4, 8 threads: {}", if same { "byte-identical" } else { "differs" }),
    )
}

fn criterion_11() -> Outcome {
    let cfg = load("table1_benchmark.conf", &[]);
    let algo = cfg.effective_algo();
    let eps = 0.001;
    let problem = table1_params(3.0, 1.0, 0.2, -0.05).problem(1.0).unwrap();
    let seed = derive_seed(cfg.seed, 2);
    let t = select_truncation(
        &problem,
        eps,
        algo.truncation_paths,
        algo.hard_cap,
        &RngStream::new(seed, Purpose::Truncation),
    )
    .unwrap();
    let fresh = tail_estimates(
        &problem,
        algo.truncation_paths,
        t.kbar,
        &RngStream::new(derive_seed(seed, 1), Purpose::Truncation),
    )
    .unwrap()[t.kbar - 1];
    outcome(
        fresh.mean < eps + 2.0 * fresh.std_error,
        format!(
            "kbar {} from {} paths; fresh tail {:.6} ({:.6}) against {eps} + 2 s.e.",
            t.kbar, algo.truncation_paths, fresh.mean, fresh.std_error
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "closed-form oracle", criterion_1()),
        (8, "finite-chain exactness", criterion_8()),
        (9, "benchmark recursion", criterion_9()),
        (11, "truncation selector", criterion_11()),
        (10, "determinism", criterion_10()),
    ];
    let runs = Runs::new();
    results.push((2, "benchmark Monte Carlo", criterion_2(&runs)));
    results.push((3, "max-call M=1", criterion_3(&runs)));
    results.push((4, "max-call M=2 with jumps", criterion_4(&runs)));
    results.push((5, "weak duality", criterion_5(&runs)));
    results.push((6, "monotone in lambda", criterion_6(&runs)));
    results.push((7, "policy iteration", criterion_7(&runs)));
    results.sort_by_key(|r| r.0);

    println!();
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
