//! Optional TOML configuration file. Keys mirror the command-line flags
//! (`budget-multiplier`, `parallel`, …); flags given on the command line win.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::Result;
use crate::harness::{parse_init, Algorithm, BenchConfig};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub function: Option<String>,
    pub dim: Option<usize>,
    pub budget_multiplier: Option<usize>,
    pub budget: Option<usize>,
    pub parallel: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub lambda: Option<String>,
    pub init: Option<String>,
    pub algorithms: Option<Vec<String>>,
    pub shift: Option<u64>,
    pub avoid_revisits: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Fields set in `self` take precedence over `base`.
    pub fn over(self, base: FileConfig) -> FileConfig {
        FileConfig {
            function: self.function.or(base.function),
            dim: self.dim.or(base.dim),
            budget_multiplier: self.budget_multiplier.or(base.budget_multiplier),
            budget: self.budget.or(base.budget),
            parallel: self.parallel.or(base.parallel),
            seed: self.seed.or(base.seed),
            seeds: self.seeds.or(base.seeds),
            lambda: self.lambda.or(base.lambda),
            init: self.init.or(base.init),
            algorithms: self.algorithms.or(base.algorithms),
            shift: self.shift.or(base.shift),
            avoid_revisits: self.avoid_revisits.or(base.avoid_revisits),
            out: self.out.or(base.out),
        }
    }

    /// Fills unset fields with defaults. `seed` is used when `seeds` is
    /// absent.
    pub fn to_bench_config(&self) -> Result<BenchConfig> {
        let mut c = BenchConfig::new(
            self.function.as_deref().unwrap_or("rastrigin"),
            self.dim.unwrap_or(2),
        );
        if let Some(m) = self.budget_multiplier {
            c.budget_multiplier = m;
        }
        c.budget = self.budget;
        if let Some(p) = self.parallel {
            c.n_parallel = p;
        }
        c.seeds = match (&self.seeds, self.seed) {
            (Some(seeds), _) => seeds.clone(),
            (None, Some(seed)) => vec![seed],
            (None, None) => vec![0],
        };
        if let Some(l) = &self.lambda {
            c.lambda = l.parse()?;
        }
        if let Some(i) = &self.init {
            c.init = parse_init(i)?;
        }
        if let Some(algs) = &self.algorithms {
            c.algorithms = algs.iter().map(|a| a.parse::<Algorithm>()).collect::<Result<_>>()?;
        }
        c.shift = self.shift;
        c.avoid_revisits = self.avoid_revisits.unwrap_or(false);
        Ok(c)
    }
}
