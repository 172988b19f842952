//! The explore/exploit optimizer.
//!
//! Each batch downsamples the history to an active set, fits the RBF
//! interpolant `T` once, and then proposes `n_parallel` candidates by
//! minimizing `T/y_range − λ R/R∨`. After every proposal the candidate is
//! adjoined to the exploration set (but not to `T`, which has no value for
//! it), so later members of the batch are pushed away from earlier ones.

use std::time::Instant;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{euclidean, Bounds};
use crate::error::{Error, Result};
use crate::magnitude::distance_matrix;
use crate::rbf::{fit, relative_errors, Interpolant};
use crate::shifted::ShiftedSystem;
use crate::solver::{InnerSolver, ProjectedQuasiNewton, SolveFailure};
use crate::surrogate::{explore_range, ExplorationField, Surrogate};

/// Proposals closer than this to an active point are jittered.
pub const DUPLICATE_RADIUS: f64 = 1e-12;

/// Relative size of the duplicate jitter.
pub const DUPLICATE_JITTER: f64 = 1e-9;

/// With [`Explo2Config::avoid_revisits`], local minimizations ending within
/// this fraction of the box diagonal of an exploration node are discarded.
pub const COLLAPSE_RADIUS: f64 = 1e-5;

/// Jitter margin of [`InitStrategy::NearCorners`], as a fraction of the box.
pub const NEAR_CORNER_MARGIN: f64 = 0.1;

/// The explore/exploit weight `λ`, indexed by evaluation number.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSchedule {
    /// `λ_n = 1 − n/N`
    Linear,
    /// `λ = 1` for the first `N − D` evaluations, then linear down to 0 over
    /// the last `D`.
    FlatThenLinear,
    /// Explicit `λ_1, …, λ_N`.
    Custom(Vec<f64>),
}

impl LambdaSchedule {
    /// `λ_n` for `n = 1..=budget`, stored at index `n − 1`.
    pub fn resolve(&self, budget: usize, dim: usize) -> Vec<f64> {
        let values: Vec<f64> = match self {
            Self::Linear => (1..=budget)
                .map(|n| 1.0 - n as f64 / budget as f64)
                .collect(),
            Self::FlatThenLinear => {
                let tail = dim.min(budget);
                let mut v = vec![1.0; budget - tail];
                v.extend(linspace(1.0, 0.0, tail));
                v
            }
            Self::Custom(table) => {
                let mut v = table.clone();
                if v.len() != budget {
                    warn!(
                        "lambda table has {} entries for a budget of {budget}; truncating or padding with the last value",
                        v.len()
                    );
                    let last = v.last().copied().unwrap_or(0.0);
                    v.resize(budget, last);
                }
                v
            }
        };
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            warn!("lambda value {bad} lies outside [0, 1]");
        }
        values
    }
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![end],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// `D + 1` i.i.d. uniform points.
    Uniform,
    /// `ℓ` and the `D` axis corners, each jittered inward by up to 10% of
    /// the box.
    NearCorners,
    /// `ℓ` and the `D` axis corners `ℓ + (u_i − ℓ_i) e_i`.
    Corners,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explo2Config {
    pub budget: usize,
    pub n_parallel: usize,
    pub n_sigma: usize,
    pub n_explore: usize,
    pub n_tries: usize,
    pub lambda: LambdaSchedule,
    pub init: InitStrategy,
    pub seed: u64,
    pub t: f64,
    /// Stop the restarts at the first one that fails to improve.
    pub early_exit: bool,
    /// Discard restarts that converge onto an exploration node, falling back
    /// to a random point when all of them do.
    pub avoid_revisits: bool,
    pub solver: ProjectedQuasiNewton,
    /// Evaluate the objective for a batch on the rayon pool.
    pub parallel_eval: bool,
}

impl Explo2Config {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            n_parallel: 1,
            n_sigma: 100,
            n_explore: 100,
            n_tries: 3,
            lambda: LambdaSchedule::Linear,
            init: InitStrategy::Uniform,
            seed: 0,
            t: f64::EPSILON.sqrt(),
            early_exit: true,
            avoid_revisits: false,
            solver: ProjectedQuasiNewton::default(),
            parallel_eval: false,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.budget <= dim + 1 {
            return fail(format!(
                "budget {} must exceed D + 1 = {}",
                self.budget,
                dim + 1
            ));
        }
        if !(1..=128).contains(&self.n_parallel) {
            return fail(format!("n_parallel {} outside [1, 128]", self.n_parallel));
        }
        if self.n_sigma < 16 {
            return fail(format!("n_sigma {} below 16", self.n_sigma));
        }
        if self.n_explore < 16 {
            return fail(format!("n_explore {} below 16", self.n_explore));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return fail(format!("scale {} must be positive and finite", self.t));
        }
        Ok(())
    }
}

/// Evaluated points and values. Non-finite objective values are stored as
/// `+∞`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    /// Out-of-sample errors of the latest interpolant; `+∞` until the first
    /// one is fitted.
    pub rel_errs: Vec<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.ys
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, y)| (self.xs[i].as_slice(), *y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 1-based.
    pub eval_index: usize,
    pub point: Vec<f64>,
    pub value: f64,
    pub best_so_far: f64,
    /// 0 for the initial design.
    pub batch_id: usize,
    /// `None` for initial points.
    pub lambda: Option<f64>,
    /// Seconds since the start of the run.
    pub wall_time: f64,
    /// The objective returned NaN or ±∞.
    pub nonfinite: bool,
    /// The point is a random substitute for a failed surrogate minimization.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fallbacks(&self) -> usize {
        self.records.iter().filter(|r| r.fallback).count()
    }

    pub fn best(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.best_so_far)
    }

    /// Appends one evaluation, maintaining `best_so_far`.
    pub fn push(&mut self, point: Vec<f64>, raw_value: f64, batch_id: usize, lambda: Option<f64>, wall_time: f64, fallback: bool) {
        let nonfinite = !raw_value.is_finite();
        let value = if nonfinite { f64::INFINITY } else { raw_value };
        let best_so_far = self.best().min(value);
        self.records.push(TraceRecord {
            eval_index: self.records.len() + 1,
            point,
            value,
            best_so_far,
            batch_id,
            lambda,
            wall_time,
            nonfinite,
            fallback,
        });
    }
}

/// A black-box objective. It may be called from several threads at once.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for F {
    fn evaluate(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// The `D + 1` initial design points.
pub fn initialize<R: Rng + ?Sized>(strategy: InitStrategy, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let extent: Vec<f64> = (0..dim).map(|i| bounds.extent(i)).collect();
    let lower = bounds.lower();
    match strategy {
        InitStrategy::Uniform => {
            let mut pts: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
            while pts.len() < dim + 1 {
                let x = bounds.sample_uniform(rng);
                if !pts.contains(&x) {
                    pts.push(x);
                }
            }
            pts
        }
        InitStrategy::Corners => {
            let mut pts = vec![lower.to_vec()];
            for i in 0..dim {
                let mut x = lower.to_vec();
                x[i] += extent[i];
                pts.push(x);
            }
            pts
        }
        InitStrategy::NearCorners => {
            let m = NEAR_CORNER_MARGIN;
            (0..=dim)
                .map(|anchor| {
                    let mut x: Vec<f64> = (0..dim)
                        .map(|j| lower[j] + m * extent[j] * rng.gen::<f64>())
                        .collect();
                    if anchor > 0 {
                        x[anchor - 1] += (1.0 - m) * extent[anchor - 1];
                    }
                    bounds.projected(&x)
                })
                .collect()
        }
    }
}

/// Active set for the evaluation numbered `n` (1-based).
///
/// Under the cap every point is kept. Otherwise the
/// `n_ρ = round(n_σ min(1, λ_n/λ_1))` points with the largest relative
/// interpolation error come first, then the lowest values among the rest.
/// Ties go to the lower index.
pub fn downsample(cloud: &PointCloud, n: usize, n_sigma: usize, lambdas: &[f64]) -> Vec<usize> {
    let len = cloud.len();
    if len <= n_sigma {
        return (0..len).collect();
    }
    let lambda_first = lambdas[0];
    let lambda_n = lambdas[(n - 1).min(lambdas.len() - 1)];
    let n_rho = if lambda_first > 0.0 {
        let ratio = (lambda_n / lambda_first).min(1.0);
        ((n_sigma as f64 * ratio).round().max(0.0) as usize).min(n_sigma)
    } else {
        0
    };

    let mut by_error: Vec<usize> = (0..len).collect();
    by_error.sort_by(|&a, &b| cloud.rel_errs[b].total_cmp(&cloud.rel_errs[a]));
    let mut chosen = vec![false; len];
    let mut selected: Vec<usize> = Vec::with_capacity(n_sigma);
    for &i in by_error.iter().take(n_rho) {
        chosen[i] = true;
        selected.push(i);
    }

    let mut by_value: Vec<usize> = (0..len).filter(|i| !chosen[*i]).collect();
    by_value.sort_by(|&a, &b| cloud.ys[a].total_cmp(&cloud.ys[b]));
    selected.extend(by_value.into_iter().take(n_sigma - n_rho));
    selected
}

/// Frozen per-batch state: the active set, its interpolant and the
/// exploration field that candidates are adjoined to.
pub struct BatchState {
    pub interpolant: Interpolant,
    pub exploration: ExplorationField,
}

impl BatchState {
    /// Fits `T` and `R` on the active points, sharing one factorization.
    /// Non-finite values are replaced by the largest finite active value.
    pub fn build(points: Vec<Vec<f64>>, values: &[f64], t: f64) -> Result<Self> {
        let max_finite = values
            .iter()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let fill = if max_finite.is_finite() { max_finite } else { 0.0 };
        let values: Vec<f64> = values
            .iter()
            .map(|&v| if v.is_finite() { v } else { fill })
            .collect();
        let system = ShiftedSystem::new(&distance_matrix(&points)?, t)?;
        let interpolant = fit(&points, &values, &system)?;
        let exploration = ExplorationField::from_system(points, system)?;
        Ok(Self {
            interpolant,
            exploration,
        })
    }
}

/// One proposal and whether it is a random substitute.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub fallback: bool,
}

/// Minimizes the surrogate for each of `lambdas.len()` candidates, adjoining
/// each winner to the exploration set before the next one.
pub fn select_batch<R: Rng + ?Sized>(
    state: &BatchState,
    lambdas: &[f64],
    bounds: &Bounds,
    config: &Explo2Config,
    solver: &dyn InnerSolver,
    rng: &mut R,
) -> Vec<Proposal> {
    let mut exploration = Some(state.exploration.clone());
    let mut proposals: Vec<Proposal> = Vec::with_capacity(lambdas.len());
    for (j, &lambda) in lambdas.iter().enumerate() {
        if j > 0 {
            let prev = &proposals[j - 1].point;
            exploration = exploration.and_then(|e| match e.adjoin(prev) {
                Ok(e) => Some(e),
                Err(err) => {
                    warn!("cannot adjoin batch member: {err}; using random points for the rest of the batch");
                    None
                }
            });
        }
        let proposal = match &exploration {
            Some(field) => propose(&state.interpolant, field, lambda, bounds, config, solver, rng),
            None => Proposal {
                point: bounds.sample_uniform(rng),
                fallback: true,
            },
        };
        let point = match &exploration {
            Some(field) => separate(proposal.point, field.nodes(), bounds, rng),
            None => proposal.point,
        };
        proposals.push(Proposal {
            point,
            fallback: proposal.fallback,
        });
    }
    proposals
}

fn propose<R: Rng + ?Sized>(
    interp: &Interpolant,
    field: &ExplorationField,
    lambda: f64,
    bounds: &Bounds,
    config: &Explo2Config,
    solver: &dyn InnerSolver,
    rng: &mut R,
) -> Proposal {
    let r_max = explore_range(field, bounds, config.n_explore, rng);
    let surrogate = Surrogate::new(interp, field, r_max, lambda);
    let radius = COLLAPSE_RADIUS * bounds.diameter();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..config.n_tries {
        let x0 = bounds.sample_uniform(rng);
        let res = solver.minimize(&surrogate, &x0, bounds);
        let valid = res.f_min.is_finite() && res.failure_reason != Some(SolveFailure::NonFinite);
        if valid && config.avoid_revisits && field.nodes().iter().any(|n| euclidean(n, &res.x_min) < radius) {
            continue;
        }
        let improved = valid && best.as_ref().is_none_or(|(_, f)| res.f_min < *f);
        if improved {
            best = Some((bounds.projected(&res.x_min), res.f_min));
        } else if config.early_exit {
            break;
        }
    }
    match best {
        Some((point, _)) => Proposal {
            point,
            fallback: false,
        },
        None => {
            debug!("surrogate minimization failed; substituting a random point");
            Proposal {
                point: bounds.sample_uniform(rng),
                fallback: true,
            }
        }
    }
}

/// Jitters `x` off any active point it (numerically) coincides with.
fn separate<R: Rng + ?Sized>(mut x: Vec<f64>, nodes: &[Vec<f64>], bounds: &Bounds, rng: &mut R) -> Vec<f64> {
    for _ in 0..8 {
        if !nodes.iter().any(|n| euclidean(n, &x) < DUPLICATE_RADIUS) {
            break;
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += DUPLICATE_JITTER * bounds.extent(i) * rng.gen_range(-1.0..=1.0);
        }
        bounds.project(&mut x);
    }
    x
}

/// Runs the optimizer with the solver from `config`.
pub fn run<F: Objective + ?Sized>(f: &F, bounds: &Bounds, config: &Explo2Config) -> Result<(PointCloud, RunTrace)> {
    run_with_solver(f, bounds, config, &config.solver)
}

/// Runs the optimizer, evaluating `f` exactly `config.budget` times.
pub fn run_with_solver<F: Objective + ?Sized>(
    f: &F,
    bounds: &Bounds,
    config: &Explo2Config,
    solver: &dyn InnerSolver,
) -> Result<(PointCloud, RunTrace)> {
    let dim = bounds.dim();
    config.validate(dim)?;
    let budget = config.budget;
    let lambdas = config.lambda.resolve(budget, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = Instant::now();

    let mut cloud = PointCloud::default();
    let mut trace = RunTrace::default();
    let commit = |cloud: &mut PointCloud, trace: &mut RunTrace, batch: Vec<Proposal>, batch_id: usize, lambdas: &[Option<f64>]| {
        let values = evaluate_batch(f, &batch, config.parallel_eval);
        for ((p, y), lambda) in batch.into_iter().zip(values).zip(lambdas) {
            trace.push(p.point.clone(), y, batch_id, *lambda, start.elapsed().as_secs_f64(), p.fallback);
            cloud.xs.push(p.point);
            cloud.ys.push(trace.records.last().map_or(y, |r| r.value));
            cloud.rel_errs.push(f64::INFINITY);
        }
    };

    let init: Vec<Proposal> = initialize(config.init, bounds, &mut rng)
        .into_iter()
        .map(|point| Proposal {
            point,
            fallback: false,
        })
        .collect();
    let init_lambdas = vec![None; init.len()];
    commit(&mut cloud, &mut trace, init, 0, &init_lambdas);

    let mut batch_id = 0;
    while cloud.len() < budget {
        batch_id += 1;
        let done = cloud.len();
        let n = done + 1;
        let size = config.n_parallel.min(budget - done);
        let batch_lambdas = &lambdas[done..done + size];

        let active = downsample(&cloud, n, config.n_sigma, &lambdas);
        let points: Vec<Vec<f64>> = active.iter().map(|&i| cloud.xs[i].clone()).collect();
        let values: Vec<f64> = active.iter().map(|&i| cloud.ys[i]).collect();

        let (batch, interp) = match BatchState::build(points, &values, config.t) {
            Ok(state) => {
                let batch = select_batch(&state, batch_lambdas, bounds, config, solver, &mut rng);
                (batch, Some(state.interpolant))
            }
            Err(err) => {
                warn!("batch {batch_id}: cannot build surrogate ({err}); using random points");
                let batch = (0..size)
                    .map(|_| Proposal {
                        point: bounds.sample_uniform(&mut rng),
                        fallback: true,
                    })
                    .collect();
                (batch, None)
            }
        };
        let tagged: Vec<Option<f64>> = batch_lambdas.iter().map(|l| Some(*l)).collect();
        commit(&mut cloud, &mut trace, batch, batch_id, &tagged);

        if let Some(interp) = interp {
            cloud.rel_errs = relative_errors(&interp, &cloud.xs, &cloud.ys);
        }
        debug!(
            "batch {batch_id}: {} evaluations, best {}",
            cloud.len(),
            trace.best()
        );
    }
    Ok((cloud, trace))
}

fn evaluate_batch<F: Objective + ?Sized>(f: &F, batch: &[Proposal], parallel: bool) -> Vec<f64> {
    if parallel && batch.len() > 1 {
        batch.par_iter().map(|p| f.evaluate(&p.point)).collect()
    } else {
        batch.iter().map(|p| f.evaluate(&p.point)).collect()
    }
}
