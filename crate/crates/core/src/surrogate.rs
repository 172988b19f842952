//! The blended surrogate `S = T/y_range − λ R/R∨` minimized to pick each
//! candidate, where `T` is the frozen interpolant and `R` the differential
//! magnitude of the live exploration set.

use rand::Rng;

use crate::bounds::{euclidean, Bounds};
use crate::differential::scaled_distance;
use crate::error::{Error, Result};
use crate::magnitude::distance_matrix;
use crate::rbf::{Interpolant, NODE_RADIUS};
use crate::shifted::ShiftedSystem;
use crate::solver::ScalarField;

/// Differential magnitude `R(x)` of the current exploration set.
#[derive(Debug, Clone)]
pub struct ExplorationField {
    nodes: Vec<Vec<f64>>,
    system: ShiftedSystem,
}

impl ExplorationField {
    pub fn new(nodes: Vec<Vec<f64>>, t: f64) -> Result<Self> {
        let system = ShiftedSystem::new(&distance_matrix(&nodes)?, t)?;
        Ok(Self { nodes, system })
    }

    /// Wraps an existing factorization of `nodes`.
    pub fn from_system(nodes: Vec<Vec<f64>>, system: ShiftedSystem) -> Result<Self> {
        if nodes.len() != system.len() {
            return Err(Error::DimensionMismatch {
                expected: system.len(),
                got: nodes.len(),
            });
        }
        Ok(Self { nodes, system })
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn system(&self) -> &ShiftedSystem {
        &self.system
    }

    pub fn scale(&self) -> f64 {
        self.system.scale()
    }

    /// Returns the field for the set with `x` adjoined, refactored from the
    /// distances.
    pub fn adjoin(&self, x: &[f64]) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        nodes.push(x.to_vec());
        Self::new(nodes, self.scale())
    }

    fn scaled(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut radii = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            if node.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: node.len(),
                    got: x.len(),
                });
            }
            radii.push(euclidean(node, x));
        }
        let t = self.scale();
        let scaled = radii.iter().map(|&r| scaled_distance(t, r)).collect();
        Ok((radii, scaled))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let (_, scaled) = self.scaled(x)?;
        let parts = self.system.candidate_parts(&scaled);
        self.system.delta_from_parts(&parts)
    }

    /// `∇R`, or [`Error::NonDifferentiable`] within [`NODE_RADIUS`] of a node.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (radii, scaled) = self.scaled(x)?;
        if radii.iter().any(|r| *r < NODE_RADIUS) {
            return Err(Error::NonDifferentiable);
        }
        let parts = self.system.candidate_parts(&scaled);
        // validates the sign of the Schur complement
        let value = self.system.delta_from_parts(&parts)?;
        if value == 0.0 && self.system.is_guarded(&parts) {
            return Ok(vec![0.0; x.len()]);
        }
        let t = self.scale();
        let shifted = self.system.shifted_total();
        let omega = self.system.omega();
        let mut grad_p = vec![0.0; x.len()];
        let mut grad_q = vec![0.0; x.len()];
        for (k, node) in self.nodes.iter().enumerate() {
            let r = radii[k];
            let base = (-t * r).exp() / r;
            let a = omega[k] * base;
            let b = 2.0 * parts.solved[k] * base;
            for i in 0..x.len() {
                let dx = x[i] - node[i];
                grad_p[i] += a * dx;
                grad_q[i] += b * dx;
            }
        }
        let p = parts.p;
        let q_red = parts.reduced_schur;
        let pm1 = p - 1.0;
        let factor = t / shifted / (q_red * q_red);
        Ok(grad_p
            .iter()
            .zip(&grad_q)
            .map(|(gp, gq)| {
                let grad_schur = 2.0 * gp + shifted * gq - 2.0 * p * gp;
                factor * (2.0 * pm1 * gp * q_red - pm1 * pm1 * grad_schur)
            })
            .collect())
    }
}

/// `R∨ = max R` over box corners: every corner when `2^D ≤ n_explore`,
/// otherwise `n_explore` corners drawn uniformly with replacement.
///
/// When every sampled corner is already in the exploration set the maximum
/// is zero, and it is taken over `n_explore` uniform points of the box
/// instead. Returns 1 if that is zero too.
pub fn explore_range<R: Rng + ?Sized>(
    field: &ExplorationField,
    bounds: &Bounds,
    n_explore: usize,
    rng: &mut R,
) -> f64 {
    let dim = bounds.dim();
    let corners: Vec<Vec<f64>> = if dim < 64 && (1u64 << dim) <= n_explore as u64 {
        (0..1u64 << dim).map(|mask| bounds.corner(mask)).collect()
    } else {
        (0..n_explore).map(|_| bounds.random_corner(rng)).collect()
    };
    let largest = |pts: &[Vec<f64>]| {
        pts.iter()
            .filter_map(|c| field.value(c).ok())
            .filter(|v| v.is_finite())
            .fold(0.0_f64, f64::max)
    };
    let max = largest(&corners);
    if max > 0.0 {
        return max;
    }
    let interior: Vec<Vec<f64>> = (0..n_explore).map(|_| bounds.sample_uniform(rng)).collect();
    let max = largest(&interior);
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

/// `S(x) = T(x)/y_range − λ R(x)/R∨`.
#[derive(Debug, Clone, Copy)]
pub struct Surrogate<'a> {
    pub exploit: &'a Interpolant,
    pub explore: &'a ExplorationField,
    pub r_max: f64,
    pub lambda: f64,
}

impl<'a> Surrogate<'a> {
    pub fn new(exploit: &'a Interpolant, explore: &'a ExplorationField, r_max: f64, lambda: f64) -> Self {
        Self {
            exploit,
            explore,
            r_max,
            lambda,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let exploit = self.exploit.eval(x)? / self.exploit.y_range();
        if self.lambda == 0.0 {
            return Ok(exploit);
        }
        Ok(exploit - self.lambda * self.explore.value(x)? / self.r_max)
    }
}

/// `∇S`, or [`Error::NonDifferentiable`] within [`NODE_RADIUS`] of a node of
/// either term.
pub fn surrogate_gradient(s: &Surrogate<'_>, x: &[f64]) -> Result<Vec<f64>> {
    let y_range = s.exploit.y_range();
    let mut grad: Vec<f64> = s.exploit.gradient(x)?.iter().map(|g| g / y_range).collect();
    if s.lambda != 0.0 {
        let scale = s.lambda / s.r_max;
        for (g, r) in grad.iter_mut().zip(s.explore.gradient(x)?) {
            *g -= scale * r;
        }
    }
    Ok(grad)
}

impl ScalarField for Surrogate<'_> {
    fn dim(&self) -> usize {
        self.exploit.dim()
    }

    /// NaN when the exploration term cannot be evaluated, which the inner
    /// solver reports as a failure.
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        match surrogate_gradient(self, x) {
            Ok(g) => Some(g),
            Err(Error::NonDifferentiable) => None,
            Err(_) => Some(vec![f64::NAN; x.len()]),
        }
    }
}
