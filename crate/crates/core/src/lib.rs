//! Metric-space magnitude primitives and the EXPLO2 surrogate-assisted
//! black-box optimizer.

pub mod bounds;
pub mod differential;
pub mod error;
pub mod explo2;
pub mod magnitude;
pub mod rbf;
pub mod shifted;
pub mod solver;
pub mod surrogate;

pub use bounds::Bounds;
pub use differential::{
    delta_magnitude, delta_magnitude_small_t, extend_weighting, submodularity_counterexample, CandidateSimilarity,
    KernelSystem,
};
pub use error::{Error, Result};
pub use explo2::{
    downsample, initialize, run, run_with_solver, select_batch, BatchState, Explo2Config, InitStrategy,
    LambdaSchedule, Objective, PointCloud, Proposal, RunTrace, TraceRecord,
};
pub use magnitude::{
    distance_matrix, magnitude_function, similarity, weighting_cg, weighting_scale_zero, CgSolution,
    DistanceMatrix, SimilaritySystem, SparseSimilarity,
};
pub use rbf::{fit, relative_errors, Interpolant};
pub use shifted::ShiftedSystem;
pub use solver::{minimize, InnerSolver, LocalSolveResult, ProjectedQuasiNewton, ScalarField, SolveFailure};
pub use surrogate::{explore_range, surrogate_gradient, ExplorationField, Surrogate};
