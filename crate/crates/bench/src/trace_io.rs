//! Trace, summary and plot-data files.
//!
//! Traces are JSON lines, one evaluation per line. Reals are written with 17
//! significant digits so they read back bit-exactly; `inf`, `-inf` and `nan`
//! are written as strings.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use explo2_core::{RunTrace, TraceRecord};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::harness::{Arm, SummaryRow};

fn fmt_real(out: &mut String, v: f64) {
    if v.is_finite() {
        write!(out, "{v:.16e}").unwrap();
    } else if v.is_nan() {
        out.push_str("\"nan\"");
    } else if v > 0.0 {
        out.push_str("\"inf\"");
    } else {
        out.push_str("\"-inf\"");
    }
}

/// One JSON object, without the trailing newline.
pub fn record_to_json(r: &TraceRecord) -> String {
    let mut s = String::with_capacity(64 + 26 * r.point.len());
    write!(s, "{{\"eval_index\":{},\"point\":[", r.eval_index).unwrap();
    for (i, x) in r.point.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        fmt_real(&mut s, *x);
    }
    s.push_str("],\"value\":");
    fmt_real(&mut s, r.value);
    s.push_str(",\"best_so_far\":");
    fmt_real(&mut s, r.best_so_far);
    write!(s, ",\"batch_id\":{},\"lambda\":", r.batch_id).unwrap();
    match r.lambda {
        Some(l) => fmt_real(&mut s, l),
        None => s.push_str("null"),
    }
    write!(s, ",\"nonfinite\":{},\"fallback\":{}}}", r.nonfinite, r.fallback).unwrap();
    s
}

pub fn write_trace<W: Write>(mut out: W, trace: &RunTrace) -> Result<()> {
    for r in &trace.records {
        writeln!(out, "{}", record_to_json(r))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Real {
    Number(f64),
    Text(String),
}

impl Real {
    fn value(self) -> std::result::Result<f64, String> {
        match self {
            Real::Number(v) => Ok(v),
            Real::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(format!("`{s}` is not a number")),
            },
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    eval_index: usize,
    point: Vec<Real>,
    value: Real,
    best_so_far: Real,
    batch_id: usize,
    lambda: Option<Real>,
    #[serde(default)]
    nonfinite: bool,
    #[serde(default)]
    fallback: bool,
}

impl RawRecord {
    fn into_record(self) -> std::result::Result<TraceRecord, String> {
        Ok(TraceRecord {
            eval_index: self.eval_index,
            point: self.point.into_iter().map(Real::value).collect::<std::result::Result<_, _>>()?,
            value: self.value.value()?,
            best_so_far: self.best_so_far.value()?,
            batch_id: self.batch_id,
            lambda: self.lambda.map(Real::value).transpose()?,
            wall_time: 0.0,
            nonfinite: self.nonfinite,
            fallback: self.fallback,
        })
    }
}

/// Reads a trace back. Wall times are not stored and come back as 0.
pub fn read_trace<R: BufRead>(input: R) -> Result<RunTrace> {
    let mut trace = RunTrace::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(RawRecord::into_record)
            .map_err(|message| BenchError::Trace { line: i + 1, message })?;
        trace.records.push(record);
    }
    Ok(trace)
}

pub fn trace_file_name(algorithm: &str, seed: u64) -> String {
    format!("{algorithm}__seed{seed}.jsonl")
}

/// Splits `{algorithm}__seed{seed}.jsonl` back into its parts.
pub fn parse_trace_file_name(path: &Path) -> Option<(String, u64)> {
    let stem = path.file_name()?.to_str()?.strip_suffix(".jsonl")?;
    let (algorithm, seed) = stem.rsplit_once("__seed")?;
    Some((algorithm.to_string(), seed.parse().ok()?))
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algorithm", "function", "dim", "checkpoint", "median", "q25", "q75", "n_seeds"])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.function.clone(),
            r.dim.to_string(),
            r.checkpoint.to_string(),
            format!("{:.16e}", r.median),
            format!("{:.16e}", r.q25),
            format!("{:.16e}", r.q75),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one trace file per arm plus `summary.csv` into `dir`.
pub fn persist(dir: &Path, arms: &[Arm], summary: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(arms.len() + 1);
    for arm in arms {
        let path = dir.join(trace_file_name(arm.algorithm.name(), arm.seed));
        write_trace(std::io::BufWriter::new(fs::File::create(&path)?), &arm.trace)?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    write_summary(fs::File::create(&path)?, summary)?;
    written.push(path);
    Ok(written)
}

/// One row of the long-format convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub algorithm: String,
    pub seed: u64,
    pub eval_index: usize,
    pub best_so_far: f64,
}

/// Long-format `(algorithm, seed, eval_index, best_so_far)` rows.
pub fn write_plot_data<W: Write>(out: W, traces: &[(String, u64, RunTrace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algorithm", "seed", "eval_index", "best_so_far"])?;
    for (algorithm, seed, trace) in traces {
        for r in &trace.records {
            w.write_record([
                algorithm.clone(),
                seed.to_string(),
                r.eval_index.to_string(),
                format!("{:.16e}", r.best_so_far),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_plot_data<R: std::io::Read>(input: R) -> Result<Vec<PlotRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(BenchError::from))
        .collect()
}

/// Loads every `*.jsonl` trace in `path` (or the single file `path`), in
/// file-name order.
pub fn load_traces(path: &Path) -> Result<Vec<(String, u64, RunTrace)>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    files
        .into_iter()
        .map(|file| {
            let (algorithm, seed) = parse_trace_file_name(&file).unwrap_or_else(|| {
                let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned());
                (stem.unwrap_or_default(), 0)
            });
            let trace = read_trace(std::io::BufReader::new(fs::File::open(&file)?))?;
            Ok((algorithm, seed, trace))
        })
        .collect()
}
