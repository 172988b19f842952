//! Test functions, baselines and a fixed-budget benchmark harness for the
//! EXPLO2 optimizer.

pub mod baselines;
pub mod config;
pub mod error;
pub mod functions;
pub mod harness;
pub mod trace_io;

pub use error::{BenchError, Result};
pub use functions::TestFunction;
pub use harness::{run_bench, Algorithm, Arm, BenchConfig, BenchResult, SummaryRow};
