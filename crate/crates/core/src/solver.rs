//! Bound-constrained local minimization of cheap scalar fields.
//!
//! The default solver is a projected limited-memory BFGS method: the search
//! direction comes from the L-BFGS two-loop recursion restricted to variables
//! that are not held at a bound, the trial point is projected back into the
//! box, and an Armijo backtracking search along the projected path
//! guarantees monotone descent.

use std::collections::VecDeque;

use crate::bounds::Bounds;

/// A scalar field to be minimized.
pub trait ScalarField {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Analytic gradient, or `None` to request finite differences at `x`.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> ScalarField for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveFailure {
    /// The field returned NaN or ±∞.
    NonFinite,
    /// The iteration budget ran out first.
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolveResult {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure_reason: Option<SolveFailure>,
}

/// A pluggable local minimizer over a box.
pub trait InnerSolver: Send + Sync {
    fn minimize(&self, field: &dyn ScalarField, x0: &[f64], bounds: &Bounds) -> LocalSolveResult;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedQuasiNewton {
    pub tol: f64,
    /// Defaults to `200·D` when `None`.
    pub max_iters: Option<usize>,
    pub memory: usize,
}

impl Default for ProjectedQuasiNewton {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: None,
            memory: 8,
        }
    }
}

/// Convenience wrapper around [`ProjectedQuasiNewton`].
pub fn minimize(
    field: &dyn ScalarField,
    x0: &[f64],
    bounds: &Bounds,
    tol: f64,
    max_iters: usize,
) -> LocalSolveResult {
    ProjectedQuasiNewton {
        tol,
        max_iters: Some(max_iters),
        ..Default::default()
    }
    .minimize(field, x0, bounds)
}

/// Central differences with step `√ε (1 + |x_i|)`, switching to a one-sided
/// difference where the step would leave the box.
pub fn central_difference(field: &dyn ScalarField, x: &[f64], bounds: &Bounds) -> Vec<f64> {
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = sqrt_eps * (1.0 + x[i].abs());
            let hi = (x[i] + h).min(bounds.upper()[i]);
            let lo = (x[i] - h).max(bounds.lower()[i]);
            probe[i] = hi;
            let f_hi = field.value(&probe);
            probe[i] = lo;
            let f_lo = field.value(&probe);
            probe[i] = x[i];
            (f_hi - f_lo) / (hi - lo)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Components of `g` that can still move the iterate: zero where `x` sits on
/// a bound and the negative gradient points outward.
fn free_mask(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<bool> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (xi, gi))| {
            let at_lower = *xi <= bounds.lower()[i] && *gi > 0.0;
            let at_upper = *xi >= bounds.upper()[i] && *gi < 0.0;
            !(at_lower || at_upper)
        })
        .collect()
}

impl ProjectedQuasiNewton {
    fn gradient(&self, field: &dyn ScalarField, x: &[f64], bounds: &Bounds) -> Vec<f64> {
        field
            .gradient(x)
            .unwrap_or_else(|| central_difference(field, x, bounds))
    }

    fn two_loop(history: &VecDeque<(Vec<f64>, Vec<f64>)>, g: &[f64], free: &[bool]) -> Vec<f64> {
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(free)
                .map(|(a, f)| if *f { *a } else { 0.0 })
                .collect()
        };
        let mut q = mask(g);
        let mut alphas = Vec::with_capacity(history.len());
        let mut pairs = Vec::with_capacity(history.len());
        for (s, y) in history.iter().rev() {
            let s = mask(s);
            let y = mask(y);
            let sy = dot(&s, &y);
            if sy <= 1e-12 * norm(&s) * norm(&y) {
                continue;
            }
            let rho = 1.0 / sy;
            let a = rho * dot(&s, &q);
            for (qi, yi) in q.iter_mut().zip(&y) {
                *qi -= a * yi;
            }
            alphas.push(a);
            pairs.push((s, y, rho));
        }
        if let Some((s, y, _)) = pairs.first() {
            let gamma = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(&alphas).rev() {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter().map(|v| -v).collect()
    }
}

impl InnerSolver for ProjectedQuasiNewton {
    fn minimize(&self, field: &dyn ScalarField, x0: &[f64], bounds: &Bounds) -> LocalSolveResult {
        let dim = bounds.dim();
        let max_iters = self.max_iters.unwrap_or(200 * dim);
        let mut x = bounds.projected(x0);
        let mut f = field.value(&x);
        let failed = |x: Vec<f64>, f: f64, iterations: usize| LocalSolveResult {
            x_min: x,
            f_min: f,
            iterations,
            converged: false,
            failure_reason: Some(SolveFailure::NonFinite),
        };
        if !f.is_finite() {
            return failed(x, f, 0);
        }
        let mut g = self.gradient(field, &x, bounds);
        if g.iter().any(|v| !v.is_finite()) {
            return failed(x, f, 0);
        }
        let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(self.memory);

        for iter in 0..max_iters {
            let free = free_mask(&x, &g, bounds);
            let projected_grad: Vec<f64> = g
                .iter()
                .zip(&free)
                .map(|(gi, f)| if *f { *gi } else { 0.0 })
                .collect();
            let pg_norm = projected_grad.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if pg_norm <= self.tol {
                return LocalSolveResult {
                    x_min: x,
                    f_min: f,
                    iterations: iter,
                    converged: true,
                    failure_reason: None,
                };
            }

            let mut direction = Self::two_loop(&history, &g, &free);
            if dot(&direction, &g) >= 0.0 {
                history.clear();
                direction = projected_grad.iter().map(|v| -v).collect();
            }
            let mut step = if history.is_empty() {
                (1.0 / norm(&direction)).min(1.0) * bounds_scale(bounds)
            } else {
                1.0
            };

            let mut accepted = None;
            for _ in 0..60 {
                let mut trial: Vec<f64> = x
                    .iter()
                    .zip(&direction)
                    .map(|(xi, di)| xi + step * di)
                    .collect();
                bounds.project(&mut trial);
                let f_trial = field.value(&trial);
                if !f_trial.is_finite() {
                    step *= 0.5;
                    continue;
                }
                let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                if f_trial <= f + 1e-4 * dot(&g, &moved) {
                    accepted = Some((trial, f_trial, moved));
                    break;
                }
                step *= 0.5;
            }

            let Some((x_new, f_new, moved)) = accepted else {
                // no decrease along the projected path: x is stationary to
                // working precision
                return LocalSolveResult {
                    x_min: x,
                    f_min: f,
                    iterations: iter + 1,
                    converged: true,
                    failure_reason: None,
                };
            };

            let g_new = self.gradient(field, &x_new, bounds);
            if g_new.iter().any(|v| !v.is_finite()) {
                return failed(x_new, f_new, iter + 1);
            }
            let step_len = norm(&moved);
            let small_step = step_len <= self.tol * (1.0 + norm(&x_new));
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            if dot(&moved, &y) > 1e-12 * step_len * norm(&y) {
                if history.len() == self.memory {
                    history.pop_front();
                }
                history.push_back((moved, y));
            }
            x = x_new;
            f = f_new;
            g = g_new;
            if small_step {
                return LocalSolveResult {
                    x_min: x,
                    f_min: f,
                    iterations: iter + 1,
                    converged: true,
                    failure_reason: None,
                };
            }
        }
        LocalSolveResult {
            x_min: x,
            f_min: f,
            iterations: max_iters,
            converged: false,
            failure_reason: Some(SolveFailure::MaxIterations),
        }
    }
}

/// Typical box width, used to size the very first step.
fn bounds_scale(bounds: &Bounds) -> f64 {
    (0..bounds.dim())
        .map(|i| bounds.extent(i))
        .fold(f64::INFINITY, f64::min)
        .max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq_dist(c: Vec<f64>) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn interior_quadratic() {
        let bounds = Bounds::cube(3, -2.0, 2.0).unwrap();
        let field = (3, sq_dist(vec![0.5, -1.0, 1.5]));
        let res = minimize(&field, &[1.9, 1.9, -1.9], &bounds, 1e-6, 600);
        assert!(res.converged);
        for (a, b) in res.x_min.iter().zip([0.5, -1.0, 1.5]) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn quadratic_outside_box_lands_on_projection() {
        let bounds = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let field = (2, sq_dist(vec![3.0, 0.4]));
        let res = minimize(&field, &[0.2, 0.9], &bounds, 1e-6, 400);
        assert!(res.converged);
        assert!((res.x_min[0] - 1.0).abs() < 1e-6);
        assert!((res.x_min[1] - 0.4).abs() < 1e-5);
    }

    #[test]
    fn kinked_one_dimensional_surrogate() {
        let t = 1.0;
        let tol = 1e-6;
        let bounds = Bounds::new(vec![0.0], vec![5.0]).unwrap();
        let field = (1, move |x: &[f64]| -(-t * (x[0] - 1.0).abs()).exp());
        for x0 in [0.1, 2.5, 4.9] {
            let res = minimize(&field, &[x0], &bounds, tol, 200);
            assert!((res.x_min[0] - 1.0).abs() < 10.0 * tol, "from {x0}: {:?}", res);
        }
    }

    #[test]
    fn non_finite_start_is_reported() {
        let bounds = Bounds::cube(1, 0.0, 1.0).unwrap();
        let field = (1, |_: &[f64]| f64::NAN);
        let res = minimize(&field, &[0.5], &bounds, 1e-6, 10);
        assert!(!res.converged);
        assert_eq!(res.failure_reason, Some(SolveFailure::NonFinite));
    }

    #[test]
    fn max_iterations_is_reported() {
        let bounds = Bounds::cube(2, -5.0, 5.0).unwrap();
        let rosen = (2, |x: &[f64]| {
            100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
        });
        let res = minimize(&rosen, &[-3.0, 4.0], &bounds, 1e-12, 3);
        assert_eq!(res.iterations, 3);
        assert_eq!(res.failure_reason, Some(SolveFailure::MaxIterations));
        assert!(res.f_min <= rosen.value(&[-3.0, 4.0]));
    }

    #[test]
    fn central_difference_stays_in_box() {
        let bounds = Bounds::cube(1, 0.0, 1.0).unwrap();
        let field = (1, |x: &[f64]| {
            assert!(x[0] >= 0.0 && x[0] <= 1.0);
            x[0] * x[0]
        });
        let g = central_difference(&field, &[1.0], &bounds);
        assert!((g[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_converges_with_fd() {
        let bounds = Bounds::cube(2, -5.0, 5.0).unwrap();
        let rosen = (2, |x: &[f64]| {
            100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
        });
        let res = minimize(&rosen, &[-1.2, 1.0], &bounds, 1e-6, 2000);
        assert!(res.f_min < 1e-8, "{res:?}");
    }
}
