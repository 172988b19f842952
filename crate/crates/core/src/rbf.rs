//! Exponential-kernel RBF interpolation, `T(x) = y Z⁻¹ ζ(x)`.
//!
//! The coefficients come from the same factorization that yields the
//! weighting, so the interpolant costs one extra solve. Internally `T` is
//! stored in the affine form `T(x) = offset + Σ_k slope_k (1 − ζ_k(x))/t`,
//! which equals `Σ_k c_k ζ_k(x)` with `c = Z⁻¹y`, `offset = Σ c_k` and
//! `slope_k = −t c_k`, but stays accurate when `t` is tiny.

use crate::bounds::euclidean;
use crate::differential::{scaled_distance, KernelSystem};
use crate::error::{Error, Result};

/// Floor on `|y|` when forming relative interpolation errors.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

/// Distances below this count as "at a node" for gradient purposes.
pub const NODE_RADIUS: f64 = 1e-8;

/// Frozen RBF interpolant of objective values over a set of nodes.
#[derive(Debug, Clone)]
pub struct Interpolant {
    nodes: Vec<Vec<f64>>,
    t: f64,
    offset: f64,
    slopes: Vec<f64>,
    y_range: f64,
}

/// Fits the interpolant of `values` at `points`; `sys` must have been built
/// from exactly these points.
pub fn fit<S: KernelSystem + ?Sized>(points: &[Vec<f64>], values: &[f64], sys: &S) -> Result<Interpolant> {
    if points.len() != sys.len() || values.len() != sys.len() {
        return Err(Error::DimensionMismatch {
            expected: sys.len(),
            got: points.len().min(values.len()),
        });
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("interpolant needs at least one node".into()));
    }
    if let Some(y) = values.iter().find(|y| !y.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value {y}")));
    }
    let (offset, slopes) = sys.interpolation_form(values)?;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    Ok(Interpolant {
        nodes: points.to_vec(),
        t: sys.scale(),
        offset,
        slopes,
        y_range: if range == 0.0 { 1.0 } else { range },
    })
}

impl Interpolant {
    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn scale(&self) -> f64 {
        self.t
    }

    /// `max y − min y` over the nodes, or 1 when all values are equal.
    pub fn y_range(&self) -> f64 {
        self.y_range
    }

    /// Kernel coefficients `c = Z⁻¹y`.
    pub fn coeffs(&self) -> Vec<f64> {
        self.slopes.iter().map(|s| -s / self.t).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `Σ_k c_k exp(−t |x − x_k|)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .nodes
                .iter()
                .zip(&self.slopes)
                .map(|(node, s)| s * scaled_distance(self.t, euclidean(node, x)))
                .sum::<f64>()
    }

    /// Gradient of `T`, or [`Error::NonDifferentiable`] within
    /// [`NODE_RADIUS`] of a node.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut grad = vec![0.0; x.len()];
        for (node, s) in self.nodes.iter().zip(&self.slopes) {
            let r = euclidean(node, x);
            if r < NODE_RADIUS {
                return Err(Error::NonDifferentiable);
            }
            // d/dx (1 − e^{−tr})/t = e^{−tr} (x − x_k)/r
            let factor = s * (-self.t * r).exp() / r;
            for ((g, xi), ni) in grad.iter_mut().zip(x).zip(node) {
                *g += factor * (xi - ni);
            }
        }
        Ok(grad)
    }
}

/// `|T(x_j) − y_j| / max(|y_j|, 1e-8)` for every point in the history,
/// including ones the interpolant never saw. Points with a non-finite value
/// get error 0 so they never enter the active set as "informative".
pub fn relative_errors(interp: &Interpolant, all_points: &[Vec<f64>], all_values: &[f64]) -> Vec<f64> {
    all_points
        .iter()
        .zip(all_values)
        .map(|(x, &y)| {
            if !y.is_finite() {
                return 0.0;
            }
            let err = (interp.eval_unchecked(x) - y).abs() / y.abs().max(RELATIVE_ERROR_FLOOR);
            if err.is_finite() {
                err
            } else {
                f64::MAX
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnitude::{distance_matrix, similarity};
    use crate::shifted::ShiftedSystem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rastrigin(x: &[f64]) -> f64 {
        10.0 * x.len() as f64
            + x.iter()
                .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                .sum::<f64>()
    }

    fn sample(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-5.12..5.12)).collect())
            .collect()
    }

    #[test]
    fn single_node_closed_form() {
        let t = 0.7;
        let pts = vec![vec![1.0, 2.0]];
        let sys = similarity(&distance_matrix(&pts).unwrap(), t).unwrap();
        let interp = fit(&pts, &[3.0], &sys).unwrap();
        let x = [4.0, -2.0];
        let expected = 3.0 * (-t * 5.0_f64).exp();
        assert!((interp.eval(&x).unwrap() - expected).abs() < 1e-14);
        let half = [1.0 + 2.0_f64.ln() / t, 2.0];
        assert!((interp.eval(&half).unwrap() - 1.5).abs() < 1e-14);
        assert_eq!(interp.y_range(), 1.0);
        assert!((interp.coeffs()[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn constant_values_reproduce_constant_at_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample(&mut rng, 12, 3);
        let sys = similarity(&distance_matrix(&pts).unwrap(), 0.5).unwrap();
        let interp = fit(&pts, &[4.5; 12], &sys).unwrap();
        for p in &pts {
            assert!((interp.eval(p).unwrap() - 4.5).abs() < 1e-9);
        }
        assert_eq!(interp.y_range(), 1.0);
    }

    #[test]
    fn rastrigin_nodes_exact_at_tiny_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = sample(&mut rng, 25, 2);
        let ys: Vec<f64> = pts.iter().map(|p| rastrigin(p)).collect();
        let t = f64::EPSILON.sqrt();
        let d = distance_matrix(&pts).unwrap();
        for interp in [
            fit(&pts, &ys, &ShiftedSystem::new(&d, t).unwrap()).unwrap(),
            fit(&pts, &ys, &similarity(&d, t).unwrap()).unwrap(),
        ] {
            for (p, y) in pts.iter().zip(&ys) {
                let v = interp.eval(p).unwrap();
                assert!((v - y).abs() <= 1e-6 * (1.0 + y.abs()), "{v} vs {y}");
            }
        }
    }

    #[test]
    fn far_field_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = sample(&mut rng, 8, 2);
        let ys: Vec<f64> = pts.iter().map(|p| rastrigin(p)).collect();
        let t = 2.0;
        let interp = fit(&pts, &ys, &similarity(&distance_matrix(&pts).unwrap(), t).unwrap()).unwrap();
        let far = [5.12 + 60.0 / t, 0.0];
        let l1: f64 = interp.coeffs().iter().map(|c| c.abs()).sum();
        assert!(interp.eval(&far).unwrap().abs() <= 1e-6 * l1 + 1e-12);
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        let interp = fit(&pts, &[0.0, 1.0], &sys).unwrap();
        assert!(matches!(
            interp.eval(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fit(&pts, &[0.0], &sys).is_err());
        assert!(fit(&pts, &[0.0, f64::NAN], &sys).is_err());
    }

    #[test]
    fn relative_error_guards_zero_values() {
        let pts = vec![vec![0.0]];
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        let interp = fit(&pts, &[0.5], &sys).unwrap();
        // the history point has y = 0 but T = 0.5 there
        let errs = relative_errors(&interp, &[vec![0.0]], &[0.0]);
        assert!(errs[0].is_finite() && errs[0] > 1e6);
        let errs = relative_errors(&interp, &[vec![0.0]], &[f64::INFINITY]);
        assert_eq!(errs[0], 0.0);
    }

    #[test]
    fn held_out_points_have_positive_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = sample(&mut rng, 30, 2);
        let ys: Vec<f64> = pts.iter().map(|p| rastrigin(p)).collect();
        let t = f64::EPSILON.sqrt();
        let sys = ShiftedSystem::new(&distance_matrix(&pts[..20]).unwrap(), t).unwrap();
        let interp = fit(&pts[..20], &ys[..20], &sys).unwrap();
        let errs = relative_errors(&interp, &pts, &ys);
        assert!(errs[..20].iter().all(|e| *e <= 1e-6));
        assert!(errs[20..].iter().all(|e| *e > 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = sample(&mut rng, 10, 3);
        let ys: Vec<f64> = pts.iter().map(|p| rastrigin(p)).collect();
        let t = 0.3;
        let interp = fit(&pts, &ys, &similarity(&distance_matrix(&pts).unwrap(), t).unwrap()).unwrap();
        let x = vec![0.3, -1.2, 2.2];
        let g = interp.gradient(&x).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (interp.eval(&xp).unwrap() - interp.eval(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()));
        }
        assert!(matches!(
            interp.gradient(&pts[0]),
            Err(Error::NonDifferentiable)
        ));
    }
}
