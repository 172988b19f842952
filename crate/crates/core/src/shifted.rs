//! Similarity systems at very small scales.
//!
//! At `t = √ε` the matrix `Z = exp[−t d]` is within `O(t)` of the all-ones
//! matrix and its condition number is around `1e10`, so quantities such as
//! `1 − ζᵀZ⁻¹ζ` lose most of their digits to cancellation when formed from a
//! factorization of `Z`. Writing
//!
//! ```text
//! Z = 11ᵀ − t D̃,   D̃ = (1 − exp[−t d]) / t
//! ```
//!
//! (exact, with `D̃` evaluated through `expm1`) and applying Sherman–Morrison
//! once gives closed forms in terms of `ω = D̃⁻¹1` and `s = 1ᵀω`:
//!
//! ```text
//! w          = ω / (s − t)
//! 1 − ζᵀw    = t (p − 1) / (s − t)
//! 1 − ζᵀZ⁻¹ζ = t Q / (s − t),   Q = −1 + 2p + (s − t) q − p²
//! ```
//!
//! with `δ̃ = (1 − ζ)/t`, `p = ωᵀδ̃` and `q = δ̃ᵀD̃⁻¹δ̃`. No `1 − (1 − O(t))`
//! cancellation remains. `D̃` is a conditionally negative definite matrix
//! (one positive eigenvalue), so it is factored with partial-pivoting LU.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::differential::{guarded_ratio, scaled_distance, CandidateSimilarity, KernelSystem, SCHUR_GUARD};
use crate::error::{Error, Result};
use crate::magnitude::{DistanceMatrix, FACTORIZATION_JITTER};

#[derive(Debug, Clone)]
pub struct ShiftedSystem {
    t: f64,
    lu: LU<f64, Dyn, Dyn>,
    omega: Vec<f64>,
    total: f64,
    weighting: Vec<f64>,
    magnitude: f64,
    jitter: f64,
}

/// Intermediate quantities for one candidate.
#[derive(Debug, Clone)]
pub(crate) struct CandidateParts {
    /// `ωᵀδ̃`
    pub p: f64,
    /// `D̃⁻¹δ̃`
    pub solved: Vec<f64>,
    /// `−1 + 2p + (s − t) q − p²`
    pub reduced_schur: f64,
}

impl ShiftedSystem {
    /// Factors the shifted form of `exp[−t d]`. Needs at least two points,
    /// since a single point has `D̃ = [0]`.
    ///
    /// A failed factorization is retried once with the same diagonal jitter
    /// as the dense path (`Z + εI` corresponds to `D̃ − (ε/t) I`).
    pub fn new(d: &DistanceMatrix, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scale must be positive and finite, got {t}"
            )));
        }
        let n = d.len();
        if n < 2 {
            return Err(Error::Degenerate(
                "shifted representation needs at least two points".into(),
            ));
        }
        let scaled = d.as_matrix().map(|r| scaled_distance(t, r));
        match Self::factor(scaled.clone(), t, 0.0) {
            Ok(sys) => Ok(sys),
            Err(_) => {
                let mut jittered = scaled;
                for i in 0..n {
                    jittered[(i, i)] -= FACTORIZATION_JITTER / t;
                }
                Self::factor(jittered, t, FACTORIZATION_JITTER)
            }
        }
    }

    fn factor(scaled: DMatrix<f64>, t: f64, jitter: f64) -> Result<Self> {
        let n = scaled.nrows();
        let lu = scaled.lu();
        let diag = lu.u().diagonal();
        let max = diag.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if let Some(pivot) = diag.iter().position(|v| !(v.abs() > 1e-14 * max)) {
            return Err(Error::NotPositiveDefinite { pivot });
        }
        let omega: Vec<f64> = lu
            .solve(&DVector::from_element(n, 1.0))
            .ok_or(Error::NotPositiveDefinite { pivot: 0 })?
            .iter()
            .cloned()
            .collect();
        let total: f64 = omega.iter().sum();
        let shifted = total - t;
        if !(shifted > 0.0 && shifted.is_finite()) {
            return Err(Error::Degenerate(format!(
                "1ᵀD̃⁻¹1 − t = {shifted:e} is not positive"
            )));
        }
        let weighting: Vec<f64> = omega.iter().map(|v| v / shifted).collect();
        Ok(Self {
            t,
            lu,
            magnitude: total / shifted,
            omega,
            total,
            weighting,
            jitter,
        })
    }

    pub fn scale(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn weighting(&self) -> &[f64] {
        &self.weighting
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `s − t`, the common denominator of every closed form.
    pub(crate) fn shifted_total(&self) -> f64 {
        self.total - self.t
    }

    /// `ω = D̃⁻¹1`
    pub(crate) fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub(crate) fn solve_scaled(&self, b: &[f64]) -> Vec<f64> {
        self.lu
            .solve(&DVector::from_column_slice(b))
            .expect("factorization was checked to be nonsingular")
            .iter()
            .cloned()
            .collect()
    }

    /// `Z⁻¹ b = −(1/t) [D̃⁻¹b + ω (ωᵀb)/(t − s)]`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: b.len(),
            });
        }
        let solved = self.solve_scaled(b);
        let proj: f64 = self.omega.iter().zip(b).map(|(o, v)| o * v).sum();
        let coef = proj / (self.t - self.total);
        Ok(solved
            .iter()
            .zip(&self.omega)
            .map(|(v, o)| -(v + o * coef) / self.t)
            .collect())
    }

    pub(crate) fn candidate_parts(&self, scaled: &[f64]) -> CandidateParts {
        let p: f64 = self.omega.iter().zip(scaled).map(|(o, v)| o * v).sum();
        let solved = self.solve_scaled(scaled);
        let q: f64 = solved.iter().zip(scaled).map(|(a, b)| a * b).sum();
        let reduced_schur = -1.0 + 2.0 * p + self.shifted_total() * q - p * p;
        CandidateParts {
            p,
            solved,
            reduced_schur,
        }
    }

    /// `1 − ζᵀZ⁻¹ζ` for the candidate.
    pub fn schur_complement(&self, candidate: &CandidateSimilarity) -> Result<f64> {
        self.check(candidate)?;
        let parts = self.candidate_parts(candidate.scaled_distances());
        Ok(self.t * parts.reduced_schur / self.shifted_total())
    }

    fn check(&self, candidate: &CandidateSimilarity) -> Result<()> {
        if candidate.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: candidate.len(),
            });
        }
        if candidate.scale() != self.t {
            return Err(Error::InvalidInput(format!(
                "candidate built at scale {} but system is at scale {}",
                candidate.scale(),
                self.t
            )));
        }
        Ok(())
    }

    /// Differential magnitude from already computed parts.
    pub(crate) fn delta_from_parts(&self, parts: &CandidateParts) -> Result<f64> {
        let shifted = self.shifted_total();
        let numerator = self.t * (parts.p - 1.0) / shifted;
        let schur = self.t * parts.reduced_schur / shifted;
        guarded_ratio(numerator, schur)
    }

    /// Whether the Schur guard zeroes the differential magnitude.
    pub(crate) fn is_guarded(&self, parts: &CandidateParts) -> bool {
        self.t * parts.reduced_schur / self.shifted_total() < SCHUR_GUARD
    }
}

impl KernelSystem for ShiftedSystem {
    fn scale(&self) -> f64 {
        self.t
    }

    fn len(&self) -> usize {
        self.omega.len()
    }

    fn weighting(&self) -> &[f64] {
        &self.weighting
    }

    fn magnitude(&self) -> f64 {
        self.magnitude
    }

    fn delta_magnitude(&self, candidate: &CandidateSimilarity) -> Result<f64> {
        self.check(candidate)?;
        let parts = self.candidate_parts(candidate.scaled_distances());
        self.delta_from_parts(&parts)
    }

    /// With `β = D̃⁻¹y` and `a = ωᵀy`:
    /// `y Z⁻¹ζ = a/(s − t) + δ̃ᵀ(β − ω a/(s − t))`.
    fn interpolation_form(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        let beta = self.solve_scaled(values);
        let a: f64 = self.omega.iter().zip(values).map(|(o, y)| o * y).sum();
        let offset = a / self.shifted_total();
        let slopes = beta
            .iter()
            .zip(&self.omega)
            .map(|(b, o)| b - o * offset)
            .collect();
        Ok((offset, slopes))
    }
}
