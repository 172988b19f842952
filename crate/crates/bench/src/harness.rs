//! Fixed-budget comparisons of EXPLO2 against its baselines.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use explo2_core::{run, Explo2Config, InitStrategy, LambdaSchedule, ProjectedQuasiNewton, RunTrace};
use log::{info, warn};
use rayon::prelude::*;

use crate::baselines::{inner_only, random_search};
use crate::error::{BenchError, Result};
use crate::functions::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Explo2,
    RandomSearch,
    InnerOnly,
    /// EXPLO2 with `λ ≡ 1`.
    PureExplore,
    /// EXPLO2 with `λ ≡ 0`.
    PureExploit,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Explo2,
        Algorithm::RandomSearch,
        Algorithm::InnerOnly,
        Algorithm::PureExplore,
        Algorithm::PureExploit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Explo2 => "explo2",
            Self::RandomSearch => "random_search",
            Self::InnerOnly => "inner_only",
            Self::PureExplore => "pure_explore",
            Self::PureExploit => "pure_exploit",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| BenchError::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaKind {
    Linear,
    FlatThenLinear,
}

impl FromStr for LambdaKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "linear" => Ok(Self::Linear),
            "flat-then-linear" => Ok(Self::FlatThenLinear),
            _ => Err(BenchError::Config(format!("unknown lambda schedule `{s}`"))),
        }
    }
}

pub fn parse_init(s: &str) -> Result<InitStrategy> {
    match s.trim().replace('_', "-").as_str() {
        "uniform" => Ok(InitStrategy::Uniform),
        "near-corners" => Ok(InitStrategy::NearCorners),
        "corners" => Ok(InitStrategy::Corners),
        _ => Err(BenchError::Config(format!("unknown init strategy `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub function: String,
    pub dim: usize,
    pub budget_multiplier: usize,
    /// Overrides `budget_multiplier · dim` when set.
    pub budget: Option<usize>,
    pub n_parallel: usize,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub lambda: LambdaKind,
    pub init: InitStrategy,
    /// Seed of an optional random shift of the test function.
    pub shift: Option<u64>,
    /// Passed through to [`Explo2Config::avoid_revisits`].
    pub avoid_revisits: bool,
}

impl BenchConfig {
    pub fn new(function: &str, dim: usize) -> Self {
        Self {
            function: function.to_string(),
            dim,
            budget_multiplier: 25,
            budget: None,
            n_parallel: 1,
            seeds: vec![0],
            algorithms: vec![Algorithm::Explo2],
            lambda: LambdaKind::Linear,
            init: InitStrategy::Uniform,
            shift: None,
            avoid_revisits: false,
        }
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(self.budget_multiplier * self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget() == 0 {
            return Err(BenchError::Config("budget must be positive".into()));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(BenchError::Config("seeds must be distinct".into()));
        }
        if self.seeds.is_empty() || self.algorithms.is_empty() {
            return Err(BenchError::Config("need at least one seed and one algorithm".into()));
        }
        self.test_function().map(|_| ())
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        let f = TestFunction::by_name(&self.function, self.dim)?;
        Ok(match self.shift {
            Some(seed) => f.shifted(seed),
            None => f,
        })
    }

    /// Optimizer settings for one arm.
    pub fn explo2_config(&self, algorithm: Algorithm, seed: u64) -> Explo2Config {
        let budget = self.budget();
        let mut config = Explo2Config::new(budget);
        config.n_parallel = self.n_parallel;
        config.seed = seed;
        config.init = self.init;
        config.avoid_revisits = self.avoid_revisits;
        config.lambda = match (algorithm, self.lambda) {
            (Algorithm::PureExplore, _) => LambdaSchedule::Custom(vec![1.0; budget]),
            (Algorithm::PureExploit, _) => LambdaSchedule::Custom(vec![0.0; budget]),
            (_, LambdaKind::Linear) => LambdaSchedule::Linear,
            (_, LambdaKind::FlatThenLinear) => LambdaSchedule::FlatThenLinear,
        };
        config
    }
}

/// The outcome of one (algorithm, seed) pair.
#[derive(Debug, Clone)]
pub struct Arm {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trace: RunTrace,
    /// Set when the arm could not run; the trace is then empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub function: String,
    pub dim: usize,
    pub checkpoint: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub arms: Vec<Arm>,
    pub summary: Vec<SummaryRow>,
}

pub fn run_arm(config: &BenchConfig, function: &TestFunction, algorithm: Algorithm, seed: u64) -> Arm {
    let f = |x: &[f64]| function.eval(x);
    let budget = config.budget();
    let bounds = function.bounds();
    let result = match algorithm {
        Algorithm::RandomSearch => Ok(random_search(&f, bounds, budget, seed)),
        Algorithm::InnerOnly => Ok(inner_only(&f, bounds, budget, seed, &ProjectedQuasiNewton::default())),
        _ => run(&f, bounds, &config.explo2_config(algorithm, seed)).map(|(_, trace)| trace),
    };
    match result {
        Ok(trace) => Arm {
            algorithm,
            seed,
            trace,
            error: None,
        },
        Err(err) => {
            warn!("{algorithm} seed {seed}: {err}");
            Arm {
                algorithm,
                seed,
                trace: RunTrace::default(),
                error: Some(err.to_string()),
            }
        }
    }
}

/// Runs every (algorithm, seed) arm in parallel and summarizes them.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    let function = config.test_function()?;
    let jobs: Vec<(Algorithm, u64)> = config
        .algorithms
        .iter()
        .flat_map(|&a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let arms: Vec<Arm> = jobs
        .par_iter()
        .map(|&(algorithm, seed)| {
            let arm = run_arm(config, &function, algorithm, seed);
            info!("{algorithm} seed {seed}: best {}", arm.trace.best());
            arm
        })
        .collect();
    let summary = summarize(&arms, &config.function, config.dim, config.budget());
    Ok(BenchResult { arms, summary })
}

/// `N/4`, `N/2` and `N`, without repeats.
pub fn checkpoints(budget: usize) -> Vec<usize> {
    let mut c = vec![(budget / 4).max(1), (budget / 2).max(1), budget];
    c.dedup();
    c
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Best value reached after `n` evaluations.
pub fn best_at(trace: &RunTrace, n: usize) -> Option<f64> {
    trace
        .records
        .get(n.saturating_sub(1))
        .or(trace.records.last())
        .map(|r| r.best_so_far)
}

pub fn summarize(arms: &[Arm], function: &str, dim: usize, budget: usize) -> Vec<SummaryRow> {
    let mut algorithms: Vec<Algorithm> = arms.iter().map(|a| a.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();
    let mut rows = Vec::new();
    for algorithm in algorithms {
        for checkpoint in checkpoints(budget) {
            let mut values: Vec<f64> = arms
                .iter()
                .filter(|a| a.algorithm == algorithm)
                .filter_map(|a| best_at(&a.trace, checkpoint))
                .collect();
            values.sort_by(f64::total_cmp);
            rows.push(SummaryRow {
                algorithm: algorithm.name().to_string(),
                function: function.to_string(),
                dim,
                checkpoint,
                median: quantile(&values, 0.5),
                q25: quantile(&values, 0.25),
                q75: quantile(&values, 0.75),
                n_seeds: values.len(),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("pure-explore".parse::<Algorithm>().unwrap(), Algorithm::PureExplore);
        assert!("cmaes".parse::<Algorithm>().is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[5.0], 0.25), 5.0);
        assert_eq!(quantile(&[1.0, f64::INFINITY, f64::INFINITY], 0.75), f64::INFINITY);
    }

    #[test]
    fn checkpoint_budgets() {
        assert_eq!(checkpoints(76), vec![19, 38, 76]);
        assert_eq!(checkpoints(2), vec![1, 2]);
    }

    #[test]
    fn budget_and_validation() {
        let mut c = BenchConfig::new("rastrigin", 4);
        assert_eq!(c.budget(), 100);
        c.budget = Some(30);
        assert_eq!(c.budget(), 30);
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        c.seeds = vec![1, 2];
        assert!(c.validate().is_ok());
        c.function = "nope".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn bench_never_exceeds_budget() {
        let mut c = BenchConfig::new("sphere", 2);
        c.budget = Some(20);
        c.seeds = vec![0, 1];
        c.algorithms = Algorithm::ALL.to_vec();
        let result = run_bench(&c).unwrap();
        assert_eq!(result.arms.len(), 10);
        for arm in &result.arms {
            assert!(arm.error.is_none());
            assert_eq!(arm.trace.len(), 20);
        }
        assert_eq!(result.summary.len(), 5 * 3);
        let again = run_bench(&c).unwrap();
        assert_eq!(result.summary, again.summary);
    }

    #[test]
    fn failing_arm_is_reported_not_fatal() {
        let mut c = BenchConfig::new("sphere", 3);
        c.budget = Some(4);
        c.algorithms = vec![Algorithm::Explo2, Algorithm::RandomSearch];
        let result = run_bench(&c).unwrap();
        let explo = result.arms.iter().find(|a| a.algorithm == Algorithm::Explo2).unwrap();
        assert!(explo.error.is_some());
        let random = result.arms.iter().find(|a| a.algorithm == Algorithm::RandomSearch).unwrap();
        assert_eq!(random.trace.len(), 4);
    }
}
