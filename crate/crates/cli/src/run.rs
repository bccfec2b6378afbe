//! Executes an experiment cell by cell.

use std::time::Instant;

use randstop::benchmark::{scaled_value_curve, value_closed_form, BenchmarkParams, Rights, ValueCurve};
use randstop::dual::{upper_bound, DualConfig};
use randstop::horizon::select_truncation;
use randstop::improve::{evaluate_threshold_policy, fit_andersen_thresholds, improve_one_step, ImprovementConfig};
use randstop::lsmc::{evaluate_rule, simulate_grids, train_continuation, MonteCarloEstimate};
use randstop::model::{ArrivalSpec, MarketModel, PayoffSpec};
use randstop::pathgen::StoppingProblem;
use randstop::regress::BasisSpec;
use randstop::rng::{derive_seed, Purpose, RngStream};
use randstop::Error;

use crate::config::{AlgoConfig, BasisChoice, BenchmarkCase, Experiment, ExperimentConfig, PayoffKind};

/// Why a cell produced no numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    /// Machine-readable reason.
    pub kind: &'static str,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NonFinite(_) => "non_finite",
            Error::CapExhausted { .. } => "cap_exhausted",
            Error::TruncationFailed { .. } => "truncation_failed",
            Error::NotGridDecidable => "not_grid_decidable",
            Error::Format(_) => "format",
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

/// Results for one `(x0, lambda)` cell or benchmark case.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub x0: f64,
    pub lambda: f64,
    pub seed: u64,
    pub case: Option<BenchmarkCase>,
    pub kbar: Option<usize>,
    pub tail: Option<MonteCarloEstimate>,
    pub truth: Option<f64>,
    pub primal: Option<MonteCarloEstimate>,
    pub dual: Option<MonteCarloEstimate>,
    pub andersen: Option<MonteCarloEstimate>,
    pub pi: Option<MonteCarloEstimate>,
    pub seconds: f64,
    pub failure: Option<Failure>,
}

impl CellResult {
    fn new(x0: f64, lambda: f64, seed: u64, case: Option<BenchmarkCase>) -> Self {
        Self {
            x0,
            lambda,
            seed,
            case,
            kbar: None,
            tail: None,
            truth: None,
            primal: None,
            dual: None,
            andersen: None,
            pi: None,
            seconds: 0.0,
            failure: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub algo: AlgoConfig,
    pub cells: Vec<CellResult>,
    /// Closed-form curves per benchmark case, for `figure_curve`.
    pub curves: Vec<ValueCurve>,
    pub wall_seconds: f64,
}

impl Report {
    pub fn failed(&self) -> bool {
        self.cells.iter().any(|c| c.failure.is_some())
    }
}

/// Runs the experiment on a pool of the configured size.
pub fn run(cfg: &ExperimentConfig) -> Report {
    match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_here(cfg)),
            Err(_) => run_here(cfg),
        },
        None => run_here(cfg),
    }
}

fn run_here(cfg: &ExperimentConfig) -> Report {
    let start = Instant::now();
    let algo = cfg.effective_algo();
    let mut cells = Vec::new();
    let mut curves = Vec::new();
    match cfg.experiment {
        Experiment::FigureCurve => {
            for (i, case) in cfg.cases.iter().enumerate() {
                let mut cell = CellResult::new(cfg.x0[0], case.rate, derive_seed(cfg.seed, i as u64), Some(*case));
                let rights = case.rights.map_or(Rights::Unlimited, Rights::Finite);
                match benchmark_params(cfg, case).and_then(|p| {
                    let curve = scaled_value_curve(&p, rights, algo.curve_points)?;
                    let v = value_closed_form(&p, rights, 0.0, cfg.x0[0])?;
                    Ok((curve, v))
                }) {
                    Ok((curve, v)) => {
                        cell.truth = Some(v);
                        curves.push(curve);
                    }
                    Err(e) => cell.failure = Some(e.into()),
                }
                cells.push(cell);
            }
        }
        Experiment::BenchmarkTable => {
            for (i, case) in cfg.cases.iter().enumerate() {
                let t0 = Instant::now();
                let mut cell = CellResult::new(cfg.x0[0], case.rate, derive_seed(cfg.seed, i as u64), Some(*case));
                if let Err(e) = benchmark_cell(cfg, &algo, case, &mut cell) {
                    cell.failure = Some(e.into());
                }
                cell.seconds = t0.elapsed().as_secs_f64();
                cells.push(cell);
            }
        }
        _ => {
            let mut index = 0u64;
            for &x0 in &cfg.x0 {
                for &lambda in &cfg.rates {
                    let t0 = Instant::now();
                    let mut cell = CellResult::new(x0, lambda, derive_seed(cfg.seed, index), None);
                    index += 1;
                    let outcome = maxcall_problem(cfg, x0, lambda)
                        .and_then(|p| simulate_cell(cfg, &algo, &p, basis_for(cfg), None, &mut cell));
                    if let Err(e) = outcome {
                        cell.failure = Some(e.into());
                    }
                    cell.seconds = t0.elapsed().as_secs_f64();
                    cells.push(cell);
                }
            }
        }
    }
    Report {
        experiment: cfg.experiment,
        algo,
        cells,
        curves,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

fn benchmark_params(cfg: &ExperimentConfig, case: &BenchmarkCase) -> randstop::Result<BenchmarkParams> {
    BenchmarkParams::new(case.mu, cfg.sigma, cfg.eta, cfg.r, case.rate, case.jump, case.horizon)
}

fn benchmark_cell(cfg: &ExperimentConfig, algo: &AlgoConfig, case: &BenchmarkCase, cell: &mut CellResult) -> randstop::Result<()> {
    let p = benchmark_params(cfg, case)?;
    let rights = case.rights.map_or(Rights::Unlimited, Rights::Finite);
    cell.truth = Some(value_closed_form(&p, rights, 0.0, cfg.x0[0])?);
    let problem = p.problem(cfg.x0[0])?;
    let basis = match cfg.algo.basis {
        BasisChoice::Auto => BasisSpec::single_asset(),
        _ => basis_for(cfg),
    };
    simulate_cell(cfg, algo, &problem, basis, case.rights, cell)
}

fn maxcall_problem(cfg: &ExperimentConfig, x0: f64, lambda: f64) -> randstop::Result<StoppingProblem> {
    let m = cfg.assets;
    let model = MarketModel::jump_diffusion(
        cfg.r,
        vec![cfg.delta; m],
        vec![cfg.sigma; m],
        vec![cfg.jump_size; m],
        vec![cfg.jump_rate; m],
        vec![x0; m],
    )?;
    let payoff = match cfg.payoff {
        PayoffKind::MaxCall => PayoffSpec::max_call(cfg.strike, cfg.r, cfg.horizon)?,
        PayoffKind::Power => PayoffSpec::power(cfg.eta, cfg.r, cfg.horizon)?,
    };
    StoppingProblem::new(model, ArrivalSpec::new(lambda, cfg.barrier, cfg.horizon)?, payoff)
}

/// Regression basis for the configured problem.
pub fn basis_for(cfg: &ExperimentConfig) -> BasisSpec {
    match cfg.algo.basis {
        BasisChoice::Single => BasisSpec::single_asset(),
        BasisChoice::TopTwo => BasisSpec::top_two(cfg.assets),
        BasisChoice::AllPairs => BasisSpec::all_pairs(cfg.assets),
        BasisChoice::Auto if cfg.assets == 1 => BasisSpec::single_asset(),
        BasisChoice::Auto if cfg.barrier.is_some() => BasisSpec::all_pairs(cfg.assets),
        BasisChoice::Auto => BasisSpec::top_two(cfg.assets),
    }
}

/// Truncation, training, primal and dual; threshold fit and improvement when
/// the experiment asks for them. `rights` fixes the truncation index directly.
fn simulate_cell(
    cfg: &ExperimentConfig,
    algo: &AlgoConfig,
    problem: &StoppingProblem,
    basis: BasisSpec,
    rights: Option<usize>,
    cell: &mut CellResult,
) -> randstop::Result<()> {
    let seed = cell.seed;
    let stream = |purpose| RngStream::new(seed, purpose);
    let kbar = match rights {
        Some(k) => k,
        None => {
            let t = select_truncation(
                problem,
                algo.truncation_epsilon,
                algo.truncation_paths,
                algo.hard_cap,
                &stream(Purpose::Truncation),
            )?;
            cell.tail = Some(t.tail);
            t.kbar
        }
    };
    cell.kbar = Some(kbar);
    let grids = simulate_grids(problem, algo.paths_train, kbar, &stream(Purpose::Training))?;
    let model = train_continuation(&grids, kbar, basis)?;
    cell.primal = Some(evaluate_rule(problem, &model, algo.paths_eval, &stream(Purpose::Evaluation))?);
    cell.dual = Some(upper_bound(
        problem,
        &model,
        DualConfig {
            outer: algo.dual_outer,
            sub: algo.dual_sub,
        },
        &stream(Purpose::DualOuter),
        &stream(Purpose::DualSub),
    )?);
    if cfg.experiment == Experiment::PolicyIterationTable {
        let thresholds = fit_andersen_thresholds(&grids, kbar)?;
        drop(grids);
        cell.andersen = Some(evaluate_threshold_policy(
            problem,
            &thresholds,
            algo.paths_eval,
            &stream(Purpose::Evaluation),
        )?);
        cell.pi = Some(improve_one_step(
            problem,
            &thresholds,
            ImprovementConfig {
                window: algo.window.unwrap_or(kbar),
                outer: algo.pi_outer,
                sub: algo.pi_sub,
            },
            &stream(Purpose::ImproveOuter),
            &stream(Purpose::ImproveSub),
        )?);
    }
    Ok(())
}
