//! Control arms: uniform random search and the bare inner solver.

use std::cell::RefCell;
use std::time::Instant;

use explo2_core::{Bounds, InnerSolver, Objective, RunTrace, ScalarField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `budget` i.i.d. uniform evaluations.
pub fn random_search<F: Objective + ?Sized>(f: &F, bounds: &Bounds, budget: usize, seed: u64) -> RunTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let mut trace = RunTrace::default();
    for i in 0..budget {
        let x = bounds.sample_uniform(&mut rng);
        let y = f.evaluate(&x);
        trace.push(x, y, i + 1, None, start.elapsed().as_secs_f64(), false);
    }
    trace
}

/// Objective wrapper that records every probe and refuses to evaluate past
/// the budget (returning NaN, which stops the solver).
struct Budgeted<'a, F: ?Sized> {
    f: &'a F,
    dim: usize,
    budget: usize,
    restart: usize,
    start: Instant,
    trace: RefCell<RunTrace>,
}

impl<F: Objective + ?Sized> ScalarField for Budgeted<'_, F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut trace = self.trace.borrow_mut();
        if trace.len() >= self.budget {
            return f64::NAN;
        }
        let y = self.f.evaluate(x);
        trace.push(x.to_vec(), y, self.restart, None, self.start.elapsed().as_secs_f64(), false);
        y
    }
}

/// Restarts `solver` on `f` itself from uniform random points until the
/// budget is spent. Every probe, including finite-difference ones, counts.
pub fn inner_only<F: Objective + ?Sized>(
    f: &F,
    bounds: &Bounds,
    budget: usize,
    seed: u64,
    solver: &dyn InnerSolver,
) -> RunTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = Budgeted {
        f,
        dim: bounds.dim(),
        budget,
        restart: 0,
        start: Instant::now(),
        trace: RefCell::new(RunTrace::default()),
    };
    while field.trace.borrow().len() < budget {
        field.restart += 1;
        let x0 = bounds.sample_uniform(&mut rng);
        solver.minimize(&field, &x0, bounds);
    }
    field.trace.into_inner()
}
