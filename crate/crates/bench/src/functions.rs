//! Test-function registry.

use std::f64::consts::{E, PI};
use std::fmt;

use explo2_core::Bounds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, Result};

/// Fraction of the half-width used for the optional random shift.
const SHIFT_FRACTION: f64 = 0.2;

pub const NAMES: &[&str] = &["rastrigin", "f8f2", "sphere", "rosenbrock", "ackley", "griewank"];

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

/// Griewank-Rosenbrock composite, minimum 0 at `(1, …, 1)`. Needs `D ≥ 2`.
pub fn f8f2(x: &[f64]) -> f64 {
    let d = x.len();
    let sum: f64 = x
        .windows(2)
        .map(|w| {
            let s = 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2);
            s / 4000.0 - s.cos()
        })
        .sum();
    10.0 / (d - 1) as f64 * sum + 10.0
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cos = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cos.exp() + 20.0 + E
}

pub fn griewank(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let prod: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    sum - prod + 1.0
}

/// A benchmark function on a box, with its known minimum.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    bounds: Bounds,
    min_value: f64,
    minimizer: Vec<f64>,
    shift: Option<Vec<f64>>,
    eval: fn(&[f64]) -> f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("shift", &self.shift)
            .finish()
    }
}

impl TestFunction {
    /// Looks up a function by name in dimension `dim`.
    pub fn by_name(name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(BenchError::Config("dimension must be at least 1".into()));
        }
        let needs_pairs = matches!(name, "f8f2" | "rosenbrock");
        if needs_pairs && dim < 2 {
            return Err(BenchError::Config(format!("{name} needs at least two dimensions")));
        }
        let (half_width, at_ones, eval): (f64, bool, fn(&[f64]) -> f64) = match name {
            "rastrigin" => (5.12, false, rastrigin),
            "f8f2" => (5.0, true, f8f2),
            "sphere" => (5.0, false, sphere),
            "rosenbrock" => (5.0, true, rosenbrock),
            "ackley" => (32.768, false, ackley),
            "griewank" => (600.0, false, griewank),
            other => return Err(BenchError::UnknownFunction(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            bounds: Bounds::cube(dim, -half_width, half_width)?,
            min_value: 0.0,
            minimizer: vec![if at_ones { 1.0 } else { 0.0 }; dim],
            shift: None,
            eval,
        })
    }

    /// Moves the minimizer by a seeded uniform offset of up to 20% of the
    /// half-width per axis.
    pub fn shifted(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..self.dim())
            .map(|i| SHIFT_FRACTION * 0.5 * self.bounds.extent(i) * rng.gen_range(-1.0..=1.0))
            .collect();
        for (m, s) in self.minimizer.iter_mut().zip(&shift) {
            *m += s;
        }
        self.shift = Some(shift);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.shift {
            None => (self.eval)(x),
            Some(shift) => {
                let moved: Vec<f64> = x.iter().zip(shift).map(|(a, s)| a - s).collect();
                (self.eval)(&moved)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rastrigin_values() {
        assert_eq!(rastrigin(&[0.0, 0.0]), 0.0);
        assert!((rastrigin(&[1.0, 1.0]) - 2.0).abs() < 1e-12);
        assert!((rastrigin(&[0.5, 0.0]) - 20.25).abs() < 1e-12);
    }

    #[test]
    fn f8f2_values() {
        assert_eq!(f8f2(&[1.0, 1.0, 1.0]), 0.0);
        let expected = 10.0 * (1.0 / 4000.0 - 1f64.cos()) + 10.0;
        assert!((f8f2(&[0.0, 0.0]) - expected).abs() < 1e-12);
        let expected = 10.0 * (100.0 / 4000.0 - 100f64.cos()) + 10.0;
        assert!((f8f2(&[1.0, 0.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn declared_minima_hold() {
        for name in NAMES {
            for dim in [2, 5, 20] {
                let f = TestFunction::by_name(name, dim).unwrap();
                assert!((f.eval(f.minimizer()) - f.min_value()).abs() <= 1e-12, "{name}");
                let g = f.clone().shifted(3);
                assert!(g.bounds().contains(g.minimizer()));
                assert!((g.eval(g.minimizer()) - g.min_value()).abs() <= 1e-12, "{name} shifted");
            }
        }
    }

    #[test]
    fn unknown_and_too_small() {
        assert!(matches!(
            TestFunction::by_name("nope", 2),
            Err(BenchError::UnknownFunction(_))
        ));
        assert!(TestFunction::by_name("f8f2", 1).is_err());
        assert!(TestFunction::by_name("sphere", 0).is_err());
    }
}
