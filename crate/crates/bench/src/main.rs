use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use explo2_bench::config::FileConfig;
use explo2_bench::harness::{run_arm, Algorithm};
use explo2_bench::trace_io::{load_traces, persist, write_plot_data, write_summary, write_trace};
use explo2_bench::{run_bench, BenchConfig};

#[derive(Parser)]
#[command(name = "explo2", version, about = "EXPLO2 optimizer and fixed-budget benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one test function once and write its trace.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare algorithms over several seeds and write traces plus a summary.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: explo2, random_search, inner_only, pure_explore, pure_exploit.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Turn trace files into a long-format convergence table.
    PlotData {
        /// A trace file or a directory of them.
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    budget_multiplier: Option<usize>,
    /// Total evaluations; overrides the multiplier.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
    /// linear or flat-then-linear.
    #[arg(long)]
    lambda: Option<String>,
    /// uniform, near-corners or corners.
    #[arg(long)]
    init: Option<String>,
    /// Seed of a random shift applied to the test function.
    #[arg(long)]
    shift: Option<u64>,
    /// Replace surrogate minima that land on an evaluated point with random points.
    #[arg(long)]
    avoid_revisits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(self, seed: Option<u64>, seeds: Option<Vec<u64>>, algorithms: Option<Vec<String>>) -> anyhow::Result<FileConfig> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => FileConfig::default(),
        };
        let cli = FileConfig {
            function: self.function,
            dim: self.dim,
            budget_multiplier: self.budget_multiplier,
            budget: self.budget,
            parallel: self.parallel,
            seed,
            seeds,
            lambda: self.lambda,
            init: self.init,
            algorithms,
            shift: self.shift,
            avoid_revisits: self.avoid_revisits.then_some(true),
            out: self.out,
        };
        Ok(cli.over(file))
    }
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_once(settings: FileConfig) -> anyhow::Result<()> {
    let mut config: BenchConfig = settings.to_bench_config()?;
    config.algorithms = vec![Algorithm::Explo2];
    config.seeds.truncate(1);
    config.validate()?;
    let function = config.test_function()?;
    let arm = run_arm(&config, &function, Algorithm::Explo2, config.seeds[0]);
    if let Some(err) = arm.error {
        bail!(err);
    }
    write_trace(output(settings.out.as_ref())?, &arm.trace)?;
    eprintln!(
        "{} D={} N={}: best {:.6e} ({} random fallbacks)",
        config.function,
        config.dim,
        config.budget(),
        arm.trace.best(),
        arm.trace.fallbacks()
    );
    Ok(())
}

fn bench(settings: FileConfig) -> anyhow::Result<()> {
    let config = settings.to_bench_config()?;
    let result = run_bench(&config)?;
    for arm in result.arms.iter().filter(|a| a.error.is_some()) {
        eprintln!("{} seed {} failed: {}", arm.algorithm, arm.seed, arm.error.as_deref().unwrap_or(""));
    }
    let dir = settings.out.unwrap_or_else(|| PathBuf::from("bench-out"));
    let files = persist(&dir, &result.arms, &result.summary)?;
    eprintln!("wrote {} files to {}", files.len(), dir.display());
    write_summary(io::stdout().lock(), &result.summary)?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { common, seed } => run_once(common.resolve(seed, None, None)?),
        Command::Bench {
            common,
            algorithms,
            seeds,
        } => bench(common.resolve(None, seeds, algorithms)?),
        Command::PlotData { input, out } => {
            let traces = load_traces(&input).with_context(|| format!("reading {}", input.display()))?;
            write_plot_data(output(out.as_ref())?, &traces)?;
            Ok(())
        }
    }
}
