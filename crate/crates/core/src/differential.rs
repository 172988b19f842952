//! Differential magnitude: how much the magnitude grows when one point is
//! adjoined to a space.
//!
//! With `Z[ζ] = [[Z, ζ], [ζᵀ, 1]]` the block inverse gives
//!
//! ```text
//! Mag(Z[ζ]) = Mag(Z) + (1 − ζᵀw)² / (1 − ζᵀZ⁻¹ζ)
//! w[ζ]      = (w; 0) + (1 − ζᵀw)/(1 − ζᵀZ⁻¹ζ) · (−Z⁻¹ζ; 1)
//! ```
//!
//! This increment is the exploration score of the optimizer.

use nalgebra::{DMatrix, DVector};

use crate::bounds::euclidean;
use crate::error::{Error, Result};
use crate::magnitude::{distance_matrix, similarity, DistanceMatrix, SimilaritySystem};

/// Schur complements below this are treated as zero: the candidate coincides
/// with an existing point and adds no magnitude.
pub const SCHUR_GUARD: f64 = 1e-12;

/// Similarities `ζ_k = exp(−t |x − x_k|)` between a candidate and each point of
/// a space, kept alongside the scaled distances `(1 − ζ_k)/t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSimilarity {
    t: f64,
    zeta: Vec<f64>,
    scaled: Vec<f64>,
}

/// `(1 − e^{−t r})/t`, accurate for tiny `t r`; `1/t` at infinite distance.
pub(crate) fn scaled_distance(t: f64, r: f64) -> f64 {
    if r.is_infinite() {
        1.0 / t
    } else {
        -(-t * r).exp_m1() / t
    }
}

impl CandidateSimilarity {
    /// From distances to each point. `+∞` is allowed and gives `ζ_k = 0`.
    pub fn from_distances(distances: &[f64], t: f64) -> Result<Self> {
        check_scale(t)?;
        if let Some(r) = distances.iter().find(|r| r.is_nan() || **r < 0.0) {
            return Err(Error::InvalidInput(format!("invalid candidate distance {r}")));
        }
        Ok(Self {
            t,
            zeta: distances.iter().map(|r| (-t * r).exp()).collect(),
            scaled: distances.iter().map(|&r| scaled_distance(t, r)).collect(),
        })
    }

    pub fn from_point<P: AsRef<[f64]>>(nodes: &[P], x: &[f64], t: f64) -> Result<Self> {
        let mut distances = Vec::with_capacity(nodes.len());
        for node in nodes {
            let node = node.as_ref();
            if node.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: node.len(),
                    got: x.len(),
                });
            }
            distances.push(euclidean(node, x));
        }
        Self::from_distances(&distances, t)
    }

    /// From raw similarities in `[0, 1]`.
    pub fn from_zeta(zeta: Vec<f64>, t: f64) -> Result<Self> {
        check_scale(t)?;
        if let Some(z) = zeta.iter().find(|z| !(**z >= 0.0 && **z <= 1.0)) {
            return Err(Error::InvalidInput(format!("similarity {z} outside [0, 1]")));
        }
        let scaled = zeta.iter().map(|z| (1.0 - z) / t).collect();
        Ok(Self { t, zeta, scaled })
    }

    pub fn scale(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// `(1 − ζ_k)/t` for each point.
    pub fn scaled_distances(&self) -> &[f64] {
        &self.scaled
    }
}

fn check_scale(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "scale must be positive and finite, got {t}"
        )))
    }
}

/// A factored similarity matrix that can score candidates and build the RBF
/// interpolant. Implemented by the dense Cholesky system and by the shifted
/// representation used at very small scales.
pub trait KernelSystem {
    fn scale(&self) -> f64;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn weighting(&self) -> &[f64];
    fn magnitude(&self) -> f64;
    /// `Mag(Z[ζ]) − Mag(Z)`, zero under the Schur guard.
    fn delta_magnitude(&self, candidate: &CandidateSimilarity) -> Result<f64>;
    /// `(offset, slopes)` such that `y Z⁻¹ ζ(x) = offset + Σ_k slopes_k (1 − ζ_k(x))/t`.
    fn interpolation_form(&self, values: &[f64]) -> Result<(f64, Vec<f64>)>;
}

fn check_candidate(len: usize, t: f64, candidate: &CandidateSimilarity) -> Result<()> {
    if candidate.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: candidate.len(),
        });
    }
    if candidate.scale() != t {
        return Err(Error::InvalidInput(format!(
            "candidate built at scale {} but system is at scale {t}",
            candidate.scale()
        )));
    }
    Ok(())
}

/// Applies the Schur guard to `numerator² / schur`.
pub(crate) fn guarded_ratio(numerator: f64, schur: f64) -> Result<f64> {
    if schur < -SCHUR_GUARD {
        Err(Error::NegativeSchurComplement(schur))
    } else if schur < SCHUR_GUARD {
        Ok(0.0)
    } else {
        Ok(numerator * numerator / schur)
    }
}

/// `(1 − ζᵀw)` and `1 − ζᵀZ⁻¹ζ` through the stored Cholesky factor.
fn dense_parts(sys: &SimilaritySystem, candidate: &CandidateSimilarity) -> (f64, f64) {
    let zeta = candidate.zeta();
    let numerator = 1.0 - crate::magnitude::dot(zeta, sys.weighting());
    let half = sys.half_solve(zeta);
    let schur = 1.0 - crate::magnitude::dot(&half, &half);
    (numerator, schur)
}

/// Increase in magnitude from adjoining the candidate to the space of `sys`.
pub fn delta_magnitude(sys: &SimilaritySystem, candidate: &CandidateSimilarity) -> Result<f64> {
    check_candidate(sys.len(), sys.scale(), candidate)?;
    let (numerator, schur) = dense_parts(sys, candidate);
    guarded_ratio(numerator, schur)
}

/// Weighting of `Z[ζ]` from the weighting of `Z`, without refactoring.
pub fn extend_weighting(sys: &SimilaritySystem, candidate: &CandidateSimilarity) -> Result<Vec<f64>> {
    check_candidate(sys.len(), sys.scale(), candidate)?;
    let zeta = candidate.zeta();
    let numerator = 1.0 - crate::magnitude::dot(zeta, sys.weighting());
    let solved = sys.solve(zeta)?;
    let schur = 1.0 - crate::magnitude::dot(zeta, &solved);
    if schur <= SCHUR_GUARD {
        return Err(Error::DegenerateExtension(schur));
    }
    let coef = numerator / schur;
    let mut out: Vec<f64> = sys
        .weighting()
        .iter()
        .zip(&solved)
        .map(|(w, v)| w - coef * v)
        .collect();
    out.push(coef);
    Ok(out)
}

impl KernelSystem for SimilaritySystem {
    fn scale(&self) -> f64 {
        SimilaritySystem::scale(self)
    }

    fn len(&self) -> usize {
        SimilaritySystem::len(self)
    }

    fn weighting(&self) -> &[f64] {
        SimilaritySystem::weighting(self)
    }

    fn magnitude(&self) -> f64 {
        SimilaritySystem::magnitude(self)
    }

    fn delta_magnitude(&self, candidate: &CandidateSimilarity) -> Result<f64> {
        delta_magnitude(self, candidate)
    }

    fn interpolation_form(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        let coeffs = self.solve(values)?;
        let t = SimilaritySystem::scale(self);
        let offset = coeffs.iter().sum();
        Ok((offset, coeffs.iter().map(|c| -t * c).collect()))
    }
}

/// Small-scale expansion of the differential magnitude,
///
/// ```text
/// t ((δᵀω − 1)/(1ᵀω − t))² (1ᵀω − t) / (−1 + 2δᵀω + δᵀ[(1ᵀω)d⁻¹ − ωωᵀ]δ),   ω = d⁻¹1,
/// ```
///
/// where `δ` holds the distances from the candidate to each point. Accurate to
/// `o(t)`; only used to cross-check [`delta_magnitude`].
pub fn delta_magnitude_small_t(d: &DistanceMatrix, delta: &[f64], t: f64) -> Result<f64> {
    check_scale(t)?;
    let n = d.len();
    if delta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: delta.len(),
        });
    }
    let lu = d.as_matrix().clone().lu();
    let singular = || Error::Degenerate("distance matrix is singular".into());
    let omega = lu.solve(&DVector::from_element(n, 1.0)).ok_or_else(singular)?;
    let delta_v = DVector::from_column_slice(delta);
    let inv_delta = lu.solve(&delta_v).ok_or_else(singular)?;
    if omega.iter().chain(inv_delta.iter()).any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let total = omega.sum();
    let p = delta_v.dot(&omega);
    let quad = total * delta_v.dot(&inv_delta) - p * p;
    let shifted = total - t;
    let ratio = (p - 1.0) / shifted;
    Ok(t * ratio * ratio * shifted / (-1.0 + 2.0 * p + quad))
}

/// Magnitudes for the four-point counterexample to submodularity,
/// `Ω = {(1,0), (0,1), (−1,0), (2,0)}`, `X = {(1,0), (0,1)}`, `x₁ = (−1,0)`,
/// `x₂ = (2,0)` at scale `t = 1`.
///
/// Returns `(Mag(X∪{x₁}) + Mag(X∪{x₂}), Mag(X∪{x₁,x₂}) + Mag(X))`; the first
/// is strictly smaller, so magnitude is not submodular.
pub fn submodularity_counterexample() -> (f64, f64) {
    let base = [[1.0, 0.0], [0.0, 1.0]];
    let x1 = [-1.0, 0.0];
    let x2 = [2.0, 0.0];
    let mag = |pts: &[[f64; 2]]| {
        let d = distance_matrix(pts).expect("fixed finite geometry");
        similarity(&d, 1.0)
            .expect("Euclidean similarity matrices are positive definite")
            .magnitude()
    };
    let lhs = mag(&[base[0], base[1], x1]) + mag(&[base[0], base[1], x2]);
    let rhs = mag(&[base[0], base[1], x1, x2]) + mag(&base);
    (lhs, rhs)
}

/// Builds `Z[ζ]` from `Z` and a candidate; used by tests to recompute from scratch.
pub fn bordered_matrix(z: &DMatrix<f64>, candidate: &CandidateSimilarity) -> DMatrix<f64> {
    let n = z.nrows();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(z);
    for (k, &zk) in candidate.zeta().iter().enumerate() {
        out[(k, n)] = zk;
        out[(n, k)] = zk;
    }
    out[(n, n)] = 1.0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| scale * rng.gen::<f64>()).collect())
            .collect()
    }

    /// Magnitude by LU on the dense matrix, independent of the Cholesky path.
    fn dense_magnitude(z: &DMatrix<f64>) -> f64 {
        let ones = DVector::from_element(z.nrows(), 1.0);
        z.clone().lu().solve(&ones).unwrap().sum()
    }

    #[test]
    fn infinitely_far_candidate_adds_exactly_one() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        let c = CandidateSimilarity::from_zeta(vec![0.0; 3], 1.0).unwrap();
        assert_eq!(delta_magnitude(&sys, &c).unwrap(), 1.0);
        let mut expected = sys.weighting().to_vec();
        expected.push(1.0);
        assert_eq!(extend_weighting(&sys, &c).unwrap(), expected);
    }

    #[test]
    fn coincident_candidate_adds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 8, 2, 1.0);
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        for k in 0..pts.len() {
            let c = CandidateSimilarity::from_point(&pts, &pts[k], 1.0).unwrap();
            assert_eq!(delta_magnitude(&sys, &c).unwrap(), 0.0);
            assert!(matches!(
                extend_weighting(&sys, &c),
                Err(Error::DegenerateExtension(_))
            ));
        }
    }

    #[test]
    fn nearly_coincident_candidate_stays_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 6, 2, 1.0);
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        let mut x = pts[3].clone();
        x[0] += 1e-12;
        let c = CandidateSimilarity::from_point(&pts, &x, 1.0).unwrap();
        let (num, schur) = dense_parts(&sys, &c);
        if schur > 0.0 {
            assert!(num * num / schur < 1e-6);
        }
        assert!(delta_magnitude(&sys, &c).unwrap() < 1e-6);
    }

    #[test]
    fn matches_brute_force_on_random_planar_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 10, 2, 3.0);
        let x: Vec<f64> = (0..2).map(|_| 3.0 * rng.gen::<f64>()).collect();
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        let c = CandidateSimilarity::from_point(&pts, &x, 1.0).unwrap();
        let brute = dense_magnitude(&bordered_matrix(sys.matrix(), &c)) - dense_magnitude(sys.matrix());
        assert!((delta_magnitude(&sys, &c).unwrap() - brute).abs() < 1e-8);
    }

    #[test]
    fn extension_matches_from_scratch_weighting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(&mut rng, 8, 3, 2.0);
        let x: Vec<f64> = (0..3).map(|_| 2.0 * rng.gen::<f64>()).collect();
        let sys = similarity(&distance_matrix(&pts).unwrap(), 1.0).unwrap();
        let c = CandidateSimilarity::from_point(&pts, &x, 1.0).unwrap();
        let extended = extend_weighting(&sys, &c).unwrap();
        let mut all = pts.clone();
        all.push(x);
        let fresh = similarity(&distance_matrix(&all).unwrap(), 1.0).unwrap();
        for (a, b) in extended.iter().zip(fresh.weighting()) {
            assert!((a - b).abs() < 1e-8);
        }
        let total: f64 = extended.iter().sum();
        let delta = delta_magnitude(&sys, &c).unwrap();
        assert!((total - (sys.magnitude() + delta)).abs() < 1e-10);
    }

    #[test]
    fn candidate_validation() {
        assert!(CandidateSimilarity::from_zeta(vec![1.5], 1.0).is_err());
        assert!(CandidateSimilarity::from_distances(&[-1.0], 1.0).is_err());
        assert!(CandidateSimilarity::from_distances(&[1.0], 0.0).is_err());
        let c = CandidateSimilarity::from_distances(&[f64::INFINITY], 2.0).unwrap();
        assert_eq!(c.zeta(), &[0.0]);
        assert_eq!(c.scaled_distances(), &[0.5]);

        let sys = similarity(&distance_matrix(&[[0.0], [1.0]]).unwrap(), 1.0).unwrap();
        let short = CandidateSimilarity::from_distances(&[1.0], 1.0).unwrap();
        assert!(matches!(
            delta_magnitude(&sys, &short),
            Err(Error::DimensionMismatch { .. })
        ));
        let other_scale = CandidateSimilarity::from_distances(&[1.0, 2.0], 2.0).unwrap();
        assert!(delta_magnitude(&sys, &other_scale).is_err());
    }

    #[test]
    fn small_t_expansion_tracks_exact_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = random_points(&mut rng, 6, 2, 1.0);
        let x = vec![0.4, 1.7];
        let d = distance_matrix(&pts).unwrap();
        let delta: Vec<f64> = pts.iter().map(|p| euclidean(p, &x)).collect();
        // brute force in the shifted representation, which is exact at any t
        let t = 1e-7;
        let sys = crate::shifted::ShiftedSystem::new(&d, t).unwrap();
        let c = CandidateSimilarity::from_distances(&delta, t).unwrap();
        let exact = sys.delta_magnitude(&c).unwrap();
        let approx = delta_magnitude_small_t(&d, &delta, t).unwrap();
        assert!((approx / exact - 1.0).abs() < 1e-3, "{approx} vs {exact}");
    }

    #[test]
    fn small_t_two_point_far_candidate() {
        let d = distance_matrix(&[[0.0], [1.0]]).unwrap();
        let r = 1e3;
        let t = 1e-8;
        let value = delta_magnitude_small_t(&d, &[r, r + 1.0], t).unwrap();
        assert!((value / t / (r / 2.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn counterexample_values() {
        let (lhs, rhs) = submodularity_counterexample();
        assert!((lhs - 4.1773).abs() < 5e-4, "{lhs}");
        assert!((rhs - 4.1815).abs() < 5e-4, "{rhs}");
        assert!(lhs < rhs);
    }
}
