//! Flat `section.key = value` configuration.
//!
//! Lines are `key = value`; `#` starts a comment. List values are comma
//! separated. Every problem found is reported, not just the first.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    BenchmarkTable,
    MaxcallTable,
    BarrierTable,
    PolicyIterationTable,
    FigureCurve,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BenchmarkTable => "benchmark_table",
            Experiment::MaxcallTable => "maxcall_table",
            Experiment::BarrierTable => "barrier_table",
            Experiment::PolicyIterationTable => "policy_iteration_table",
            Experiment::FigureCurve => "figure_curve",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "benchmark_table" => Experiment::BenchmarkTable,
            "maxcall_table" => Experiment::MaxcallTable,
            "barrier_table" => Experiment::BarrierTable,
            "policy_iteration_table" => Experiment::PolicyIterationTable,
            "figure_curve" => Experiment::FigureCurve,
            other => return Err(format!("unknown experiment `{other}`")),
        })
    }
}

/// Path-count preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Counts exactly as configured.
    Paper,
    /// Training, evaluation, truncation and outer improvement paths divided by
    /// 10, dual counts by 5, improvement sub-paths by 2.5.
    Desk,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(format!("unknown scale `{other}` (paper or desk)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayoffKind {
    Power,
    MaxCall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisChoice {
    Auto,
    Single,
    TopTwo,
    AllPairs,
}

/// One closed-form benchmark case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkCase {
    pub horizon: f64,
    pub rate: f64,
    pub mu: f64,
    /// `None` means unlimited rights, truncated by the selector.
    pub rights: Option<usize>,
    pub jump: f64,
}

/// Monte Carlo sizes; all counts even.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgoConfig {
    pub paths_train: usize,
    pub paths_eval: usize,
    pub dual_outer: usize,
    pub dual_sub: usize,
    pub pi_outer: usize,
    pub pi_sub: usize,
    /// `None` means the truncation index.
    pub window: Option<usize>,
    pub truncation_epsilon: f64,
    pub truncation_paths: usize,
    pub hard_cap: usize,
    pub basis: BasisChoice,
    pub curve_points: usize,
}

impl AlgoConfig {
    /// Counts after applying a scale preset, rounded to even.
    pub fn scaled(&self, scale: Scale) -> Self {
        if scale == Scale::Paper {
            return *self;
        }
        let div = |n: usize, d: f64| (((n as f64 / d) / 2.0).round() as usize).max(1) * 2;
        Self {
            paths_train: div(self.paths_train, 10.0),
            paths_eval: div(self.paths_eval, 10.0),
            dual_outer: div(self.dual_outer, 5.0),
            dual_sub: div(self.dual_sub, 5.0),
            pi_outer: div(self.pi_outer, 10.0),
            pi_sub: div(self.pi_sub, 2.5),
            truncation_paths: div(self.truncation_paths, 10.0),
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// `None` lets the thread pool pick.
    pub threads: Option<usize>,
    pub scale: Scale,
    pub timings: bool,
    pub assets: usize,
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    pub jump_size: f64,
    pub jump_rate: f64,
    pub x0: Vec<f64>,
    pub rates: Vec<f64>,
    pub barrier: Option<f64>,
    pub horizon: f64,
    pub payoff: PayoffKind,
    pub strike: f64,
    pub eta: f64,
    pub cases: Vec<BenchmarkCase>,
    pub algo: AlgoConfig,
    /// Every key and value as read, for the run manifest.
    pub echo: BTreeMap<String, String>,
}

/// All violations found in a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "threads",
    "scale",
    "output.timings",
    "model.assets",
    "model.r",
    "model.delta",
    "model.sigma",
    "model.jump_size",
    "model.jump_rate",
    "model.x0",
    "arrivals.rates",
    "arrivals.barrier",
    "arrivals.horizon",
    "payoff.kind",
    "payoff.strike",
    "payoff.eta",
    "benchmark.horizon",
    "benchmark.rate",
    "benchmark.mu",
    "benchmark.rights",
    "benchmark.jump",
    "algo.paths_train",
    "algo.paths_eval",
    "algo.dual_outer",
    "algo.dual_sub",
    "algo.pi_outer",
    "algo.pi_sub",
    "algo.window",
    "algo.truncation_epsilon",
    "algo.truncation_paths",
    "algo.hard_cap",
    "algo.basis",
    "algo.curve_points",
];

/// Splits text into key-value pairs; malformed lines and duplicates are errors.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    let mut errors = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`", no + 1));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            errors.push(format!("{k}: unknown key"));
        } else if map.insert(k.to_string(), v.to_string()).is_some() {
            errors.push(format!("{k}: given more than once"));
        }
    }
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(ConfigError(errors))
    }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(e) => {
                    self.errors.push(format!("{key}: `{v}`: {e}"));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => default,
            Some(v) => {
                let mut out = Vec::new();
                for item in v.split(',').map(str::trim) {
                    match item.parse() {
                        Ok(x) => out.push(x),
                        Err(e) => {
                            self.errors.push(format!("{key}: `{item}`: {e}"));
                            return default;
                        }
                    }
                }
                out
            }
        }
    }

    fn check(&mut self, ok: bool, key: &str, msg: &str) {
        if !ok {
            self.errors.push(format!("{key}: {msg}"));
        }
    }
}

fn parse_rights(s: &str) -> Result<Option<usize>, String> {
    match s {
        "inf" | "infinity" | "unlimited" => Ok(None),
        n => n
            .parse::<usize>()
            .map(Some)
            .map_err(|e| format!("{e} (a count or `inf`)")),
    }
}

fn parse_optional(s: &str) -> Result<Option<f64>, String> {
    match s {
        "none" => Ok(None),
        v => v.parse().map(Some).map_err(|e| format!("{e}")),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_pairs(parse_pairs(text)?)
    }

    pub fn from_pairs(map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut r = Reader {
            map: &map,
            errors: Vec::new(),
        };
        let experiment = match map.get("experiment") {
            None => {
                r.errors.push("experiment: required".into());
                Experiment::MaxcallTable
            }
            Some(_) => r.get("experiment", Experiment::MaxcallTable),
        };
        let seed = r.get("seed", 1u64);
        let threads = match map.get("threads").map(String::as_str) {
            None | Some("auto") => None,
            Some(_) => Some(r.get("threads", 1usize)),
        };
        let scale = r.get("scale", Scale::Paper);
        let timings = r.get("output.timings", false);
        let assets = r.get("model.assets", 1usize);
        let rate_default = r.get("model.r", 0.05);
        let delta = r.get("model.delta", 0.1);
        let sigma = r.get("model.sigma", 0.2);
        let jump_size = r.get("model.jump_size", 0.0);
        let jump_rate = r.get("model.jump_rate", 0.0);
        let x0: Vec<f64> = r.list("model.x0", vec![90.0, 100.0, 110.0]);
        let rates: Vec<f64> = r.list("arrivals.rates", vec![1.0, 2.0, 5.0]);
        let barrier = match map.get("arrivals.barrier") {
            None => None,
            Some(v) => match parse_optional(v) {
                Ok(b) => b,
                Err(e) => {
                    r.errors.push(format!("arrivals.barrier: `{v}`: {e}"));
                    None
                }
            },
        };
        let horizon: f64 = r.get("arrivals.horizon", 3.0);
        let payoff = match map.get("payoff.kind").map(String::as_str) {
            None | Some("max_call") => PayoffKind::MaxCall,
            Some("power") => PayoffKind::Power,
            Some(other) => {
                r.errors.push(format!("payoff.kind: unknown payoff `{other}` (power or max_call)"));
                PayoffKind::MaxCall
            }
        };
        let strike = r.get("payoff.strike", 100.0);
        let eta = r.get("payoff.eta", 2.0);

        let b_horizon = r.list("benchmark.horizon", vec![3.0, 3.0, 3.0, 1.0, 3.0, 3.0]);
        let b_rate = r.list("benchmark.rate", vec![1.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        let b_mu = r.list("benchmark.mu", vec![0.2, 0.2, 0.2, 0.2, 0.5, 0.2]);
        let b_jump = r.list("benchmark.jump", vec![-0.05, -0.05, -0.05, -0.05, -0.05, 0.0]);
        let b_rights: Vec<Option<usize>> = match map.get("benchmark.rights") {
            None => vec![Some(1), Some(3), None, None, None, None],
            Some(v) => {
                let parsed: Result<Vec<_>, _> = v.split(',').map(|s| parse_rights(s.trim())).collect();
                parsed.unwrap_or_else(|e| {
                    r.errors.push(format!("benchmark.rights: `{v}`: {e}"));
                    Vec::new()
                })
            }
        };
        let n = b_horizon.len();
        let same = [b_rate.len(), b_mu.len(), b_jump.len(), b_rights.len()]
            .iter()
            .all(|&m| m == n);
        r.check(same, "benchmark", "horizon, rate, mu, rights and jump lists must have equal length");
        let cases = if same {
            (0..n)
                .map(|i| BenchmarkCase {
                    horizon: b_horizon[i],
                    rate: b_rate[i],
                    mu: b_mu[i],
                    rights: b_rights[i],
                    jump: b_jump[i],
                })
                .collect()
        } else {
            Vec::new()
        };

        let window = match map.get("algo.window").map(String::as_str) {
            None | Some("kbar") => None,
            Some(_) => Some(r.get("algo.window", 1usize)),
        };
        let basis = match map.get("algo.basis").map(String::as_str) {
            None | Some("auto") => BasisChoice::Auto,
            Some("single") => BasisChoice::Single,
            Some("toptwo") => BasisChoice::TopTwo,
            Some("allpairs") => BasisChoice::AllPairs,
            Some(other) => {
                r.errors.push(format!("algo.basis: unknown basis `{other}`"));
                BasisChoice::Auto
            }
        };
        let algo = AlgoConfig {
            paths_train: r.get("algo.paths_train", 200_000),
            paths_eval: r.get("algo.paths_eval", 2_000_000),
            dual_outer: r.get("algo.dual_outer", 1_500),
            dual_sub: r.get("algo.dual_sub", 10_000),
            pi_outer: r.get("algo.pi_outer", 100_000),
            pi_sub: r.get("algo.pi_sub", 500),
            window,
            truncation_epsilon: r.get("algo.truncation_epsilon", 1e-3),
            truncation_paths: r.get("algo.truncation_paths", 100_000),
            hard_cap: r.get("algo.hard_cap", 200),
            basis,
            curve_points: r.get("algo.curve_points", 61),
        };

        for (key, n) in [
            ("algo.paths_train", algo.paths_train),
            ("algo.paths_eval", algo.paths_eval),
            ("algo.dual_outer", algo.dual_outer),
            ("algo.dual_sub", algo.dual_sub),
            ("algo.pi_outer", algo.pi_outer),
            ("algo.pi_sub", algo.pi_sub),
            ("algo.truncation_paths", algo.truncation_paths),
        ] {
            r.check(n >= 2 && n % 2 == 0, key, "must be even and at least 2 (antithetic pairs)");
        }
        r.check(
            algo.truncation_epsilon > 0.0 && algo.truncation_epsilon.is_finite(),
            "algo.truncation_epsilon",
            "must be positive",
        );
        r.check(algo.hard_cap >= 1, "algo.hard_cap", "must be at least 1");
        r.check(window != Some(0), "algo.window", "must be at least 1");
        r.check(algo.curve_points >= 2, "algo.curve_points", "must be at least 2");
        r.check(threads != Some(0), "threads", "must be at least 1");
        r.check(assets >= 1, "model.assets", "must be at least 1");
        r.check(!x0.is_empty(), "model.x0", "must not be empty");
        r.check(x0.iter().all(|&x| x > 0.0 && x.is_finite()), "model.x0", "prices must be positive");
        r.check(!rates.is_empty(), "arrivals.rates", "must not be empty");
        r.check(rates.iter().all(|&l| l > 0.0 && l.is_finite()), "arrivals.rates", "rates must be positive");
        r.check(horizon > 0.0 && horizon.is_finite(), "arrivals.horizon", "must be positive");
        r.check(sigma >= 0.0, "model.sigma", "must be non-negative");
        r.check(jump_size > -1.0, "model.jump_size", "must exceed -1");
        r.check(jump_rate >= 0.0, "model.jump_rate", "must be non-negative");
        if let Some(b) = barrier {
            r.check(b >= 0.0, "arrivals.barrier", "must be non-negative");
        }
        let benchmark_like = matches!(experiment, Experiment::BenchmarkTable | Experiment::FigureCurve);
        if benchmark_like {
            r.check(!cases.is_empty() || !same, "benchmark", "need at least one case");
            r.check(assets == 1, "model.assets", "the benchmark has a single asset");
            r.check(x0.len() == 1, "model.x0", "the benchmark takes a single starting price");
            r.check(barrier.is_none(), "arrivals.barrier", "the benchmark has no barrier");
        } else {
            r.check(payoff == PayoffKind::MaxCall, "payoff.kind", "this experiment prices a max-call");
        }
        match experiment {
            Experiment::BarrierTable | Experiment::PolicyIterationTable => {
                r.check(barrier.is_some(), "arrivals.barrier", "this experiment needs a barrier")
            }
            Experiment::MaxcallTable => {
                r.check(barrier.is_none(), "arrivals.barrier", "use barrier_table for gated arrivals")
            }
            _ => {}
        }
        if r.errors.is_empty() {
            Ok(Self {
                experiment,
                seed,
                threads,
                scale,
                timings,
                assets,
                r: rate_default,
                delta,
                sigma,
                jump_size,
                jump_rate,
                x0,
                rates,
                barrier,
                horizon,
                payoff,
                strike,
                eta,
                cases,
                algo,
                echo: map.clone(),
            })
        } else {
            Err(ConfigError(r.errors))
        }
    }

    /// Counts in effect after the scale preset.
    pub fn effective_algo(&self) -> AlgoConfig {
        self.algo.scaled(self.scale)
    }
}
