//! Distance and similarity matrices, weightings and magnitude.
//!
//! For a finite metric space with distance matrix `d` and scale `t > 0` the
//! similarity matrix is `Z = exp[-t d]` (entrywise). A weighting is the
//! solution of `Z w = 1` and the magnitude is `Σ w_j`. Euclidean point sets
//! give a positive definite `Z`, so the dense path factors `Z` once with a
//! Cholesky decomposition and reuses that factor for every right-hand side.

use nalgebra::DMatrix;

use crate::bounds::euclidean;
use crate::error::{Error, Result};

/// Diagonal jitter applied once when the Cholesky factorization fails.
pub const FACTORIZATION_JITTER: f64 = 1e-10;

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    entries: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Wraps a precomputed matrix after checking that it is square, has a zero
    /// diagonal, nonnegative entries and is symmetric to 1e-12 relative.
    /// `+∞` entries are allowed.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidInput(
                "distance matrix must be square and non-empty".into(),
            ));
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if a.is_nan() || b.is_nan() || a < 0.0 || b < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) is negative or NaN"
                    )));
                }
                let asymmetric = if a.is_finite() && b.is_finite() {
                    (a - b).abs() > 1e-12 * a.abs().max(b.abs())
                } else {
                    a != b
                };
                if asymmetric {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn diameter(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }
}

/// Euclidean pairwise distances between `points`.
pub fn distance_matrix<P: AsRef<[f64]>>(points: &[P]) -> Result<DistanceMatrix> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("need at least one point".into()));
    }
    let dim = points[0].as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
    }
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let dij = euclidean(points[i].as_ref(), points[j].as_ref());
            entries[(i, j)] = dij;
            entries[(j, i)] = dij;
        }
    }
    Ok(DistanceMatrix { entries })
}

/// `exp[-t d]`, entrywise.
pub fn similarity_matrix(d: &DistanceMatrix, t: f64) -> DMatrix<f64> {
    d.as_matrix().map(|v| (-t * v).exp())
}

/// Dense lower-triangular Cholesky factor, stored row-major.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a + jitter·I`; on failure returns the index of the first
    /// non-positive pivot.
    pub(crate) fn factor(a: &DMatrix<f64>, jitter: f64) -> std::result::Result<Self, usize> {
        let n = a.nrows();
        let mut lower = vec![0.0; n * n];
        for j in 0..n {
            let row_j = j * n;
            let mut diag = a[(j, j)] + jitter;
            for k in 0..j {
                diag -= lower[row_j + k] * lower[row_j + k];
            }
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(j);
            }
            let ljj = diag.sqrt();
            lower[row_j + j] = ljj;
            for i in (j + 1)..n {
                let row_i = i * n;
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= lower[row_i + k] * lower[row_j + k];
                }
                lower[row_i + j] = s / ljj;
            }
        }
        Ok(Self { n, lower })
    }

    /// `L⁻¹ b`.
    pub(crate) fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            let mut s = y[i];
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        y
    }

    /// `(L Lᵀ)⁻¹ b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }
}

/// Similarity matrix at one scale together with its factorization, weighting
/// and magnitude.
#[derive(Debug, Clone)]
pub struct SimilaritySystem {
    t: f64,
    z: DMatrix<f64>,
    factor: Cholesky,
    weighting: Vec<f64>,
    magnitude: f64,
    jitter: f64,
}

/// Builds `Z = exp[-t d]`, factors it and solves for the weighting.
///
/// If the first factorization fails, [`FACTORIZATION_JITTER`] is added to the
/// diagonal and the factorization is retried once; a second failure is
/// reported as [`Error::NotPositiveDefinite`].
pub fn similarity(d: &DistanceMatrix, t: f64) -> Result<SimilaritySystem> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "scale must be positive and finite, got {t}"
        )));
    }
    SimilaritySystem::from_matrix(similarity_matrix(d, t), t)
}

impl SimilaritySystem {
    /// Factors an already formed similarity matrix.
    pub fn from_matrix(z: DMatrix<f64>, t: f64) -> Result<Self> {
        let (factor, jitter) = match Cholesky::factor(&z, 0.0) {
            Ok(f) => (f, 0.0),
            Err(_) => match Cholesky::factor(&z, FACTORIZATION_JITTER) {
                Ok(f) => {
                    log::debug!("similarity factorization needed diagonal jitter");
                    (f, FACTORIZATION_JITTER)
                }
                Err(pivot) => return Err(Error::NotPositiveDefinite { pivot }),
            },
        };
        let weighting = factor.solve(&vec![1.0; z.nrows()]);
        let magnitude = weighting.iter().sum();
        Ok(Self {
            t,
            z,
            factor,
            weighting,
            magnitude,
            jitter,
        })
    }

    pub fn scale(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn weighting(&self) -> &[f64] {
        &self.weighting
    }

    /// Solves `vᵀ Z = 1ᵀ`. `Z` is symmetric, so this is the weighting.
    pub fn coweighting(&self) -> Vec<f64> {
        self.factor.solve(&vec![1.0; self.len()])
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    /// Diagonal jitter that was needed to factor `Z` (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `Z⁻¹ b` through the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: b.len(),
            });
        }
        Ok(self.factor.solve(b))
    }

    /// `L⁻¹ b`, so that `bᵀ Z⁻¹ c = (L⁻¹b)·(L⁻¹c)`.
    pub(crate) fn half_solve(&self, b: &[f64]) -> Vec<f64> {
        self.factor.forward(b)
    }

    /// `‖Z w − 1‖∞`.
    pub fn weighting_residual(&self) -> f64 {
        residual_inf(&self.z, &self.weighting)
    }
}

fn residual_inf(z: &DMatrix<f64>, w: &[f64]) -> f64 {
    let n = z.nrows();
    (0..n)
        .map(|i| {
            let row: f64 = (0..n).map(|j| z[(i, j)] * w[j]).sum();
            (row - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// `Mag(t; d)` at each requested scale. Scales are solved independently.
pub fn magnitude_function(d: &DistanceMatrix, ts: &[f64]) -> Result<Vec<(f64, f64)>> {
    ts.iter()
        .map(|&t| {
            similarity(d, t)
                .map(|sys| (t, sys.magnitude()))
                .map_err(|e| Error::AtScale {
                    t,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Limits of the weighting and coweighting as `t ↓ 0`:
/// `w(0) = d⁻¹1 / (1ᵀd⁻¹1)` and `v(0) = 1ᵀd⁻¹ / (1ᵀd⁻¹1)`.
pub fn weighting_scale_zero(d: &DistanceMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Degenerate(
            "a one-point distance matrix is singular".into(),
        ));
    }
    let ones = nalgebra::DVector::from_element(n, 1.0);
    let solve = |m: DMatrix<f64>| -> Result<Vec<f64>> {
        let lu = m.lu();
        let diag = lu.u().diagonal();
        let max = diag.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if !(min > 1e-14 * max) {
            return Err(Error::Degenerate("distance matrix is singular".into()));
        }
        lu.solve(&ones)
            .map(|v| v.iter().cloned().collect())
            .ok_or_else(|| Error::Degenerate("distance matrix is singular".into()))
    };
    let omega = solve(d.as_matrix().clone())?;
    let co = solve(d.as_matrix().transpose())?;
    let total: f64 = omega.iter().sum();
    let co_total: f64 = co.iter().sum();
    let scale = omega.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(total.abs() > 1e-14 * scale) || !total.is_finite() {
        return Err(Error::Degenerate("1ᵀd⁻¹1 vanishes".into()));
    }
    Ok((
        omega.iter().map(|v| v / total).collect(),
        co.iter().map(|v| v / co_total).collect(),
    ))
}

/// Hard-thresholded similarity matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseSimilarity {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSimilarity {
    /// Keeps the diagonal and every off-diagonal entry `>= threshold`.
    pub fn from_dense(z: &DMatrix<f64>, threshold: f64) -> Result<Self> {
        let n = z.nrows();
        if n == 0 || z.ncols() != n {
            return Err(Error::InvalidInput("similarity matrix must be square".into()));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            if (z[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = z[(i, j)];
                if (v - z[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("similarity matrix is not symmetric".into()));
                }
                if i == j || v >= threshold {
                    cols.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            values,
        })
    }

    /// Thresholds `exp[-t d]` without forming the dense matrix.
    pub fn from_distances(d: &DistanceMatrix, t: f64, threshold: f64) -> Result<Self> {
        Self::from_dense(&similarity_matrix(d, t), threshold)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub weighting: Vec<f64>,
    pub iterations: usize,
    /// `‖Z w − 1‖₂` at exit.
    pub residual_norm: f64,
}

/// Solves `Z w = 1` by conjugate gradients.
///
/// Stops once `‖Z w − 1‖₂ ≤ tol·√n`. Thresholding may destroy positive
/// definiteness, so non-positive curvature is reported as
/// [`Error::CgBreakdown`] and stagnation as [`Error::CgNotConverged`]; both
/// mean the caller should switch to a generic solver. The unit diagonal makes
/// Jacobi preconditioning the identity, so none is applied.
pub fn weighting_cg(
    z: &SparseSimilarity,
    initial_guess: Option<&[f64]>,
    tol: f64,
) -> Result<CgSolution> {
    let n = z.len();
    let mut w = match initial_guess {
        Some(g) if g.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len(),
            })
        }
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let target = tol * (n as f64).sqrt();
    let zw = z.mul(&w);
    let mut r: Vec<f64> = zw.iter().map(|v| 1.0 - v).collect();
    let mut rr = dot(&r, &r);
    let mut p = r.clone();
    let max_iters = (10 * n).max(50);
    let mut iterations = 0;
    while rr.sqrt() > target {
        if iterations >= max_iters {
            return Err(Error::CgNotConverged {
                iterations,
                residual: rr.sqrt(),
            });
        }
        let zp = z.mul(&p);
        let curvature = dot(&p, &zp);
        if !(curvature > f64::EPSILON * dot(&p, &p)) {
            return Err(Error::CgBreakdown {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rr / curvature;
        for i in 0..n {
            w[i] += alpha * p[i];
            r[i] -= alpha * zp[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    // report the true residual rather than the recursively updated one
    let residual_norm = z
        .mul(&w)
        .iter()
        .map(|v| (v - 1.0) * (v - 1.0))
        .sum::<f64>()
        .sqrt();
    Ok(CgSolution {
        weighting: w,
        iterations,
        residual_norm,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
