//! Batch execution, summary statistics, regression, and CSV output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::emulation::{choose_r, RPolicy};
use crate::error::{Error, Result};
use crate::model::ModelVariant;
use crate::protocol::Protocol;
use crate::rng::derive_seed;
use crate::sim::{run_protocol, validate, RunConfig, RunResult};

pub const RESULTS_HEADER: [&str; 11] = [
    "protocol",
    "variant",
    "n",
    "run_id",
    "seed",
    "phases",
    "slots",
    "correct",
    "reported_size_min",
    "reported_size_max",
    "aborted",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "protocol",
    "variant",
    "n",
    "runs",
    "mean_phases",
    "std_phases",
    "min_phases",
    "max_phases",
    "incorrect",
    "aborted",
];

/// How `bl-mc` picks its emulation rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundsSetting {
    Fixed(u32),
    Policy(RPolicy),
}

impl RoundsSetting {
    pub fn resolve(self) -> Result<u32> {
        match self {
            Self::Fixed(r) => Ok(r),
            Self::Policy(policy) => choose_r(policy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub protocol: Protocol,
    pub variant: ModelVariant,
    pub n_values: Vec<usize>,
    pub runs_per_n: u64,
    pub master_seed: u64,
    /// Required for `bl-mc`, rejected otherwise.
    pub rounds: Option<RoundsSetting>,
    /// Phase cap per run; defaults to 10 000 per node.
    pub phase_cap: Option<u64>,
    /// Worker threads; 0 lets rayon decide. Results do not depend on it.
    pub jobs: usize,
}

impl BatchConfig {
    pub fn new(
        protocol: Protocol,
        n_values: Vec<usize>,
        runs_per_n: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            protocol,
            variant: protocol.variant(),
            n_values,
            runs_per_n,
            master_seed,
            rounds: None,
            phase_cap: None,
            jobs: 1,
        }
    }

    /// Emulation rounds in effect, after applying the policy.
    pub fn r(&self) -> Result<Option<u32>> {
        self.rounds.map(RoundsSetting::resolve).transpose()
    }

    fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            r: self.r()?,
            phase_cap: self.phase_cap,
            trace: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::Config("no network sizes given".into()));
        }
        if self.runs_per_n == 0 {
            return Err(Error::Config("runs per size must be at least 1".into()));
        }
        let config = self.run_config()?;
        for &n in &self.n_values {
            validate(self.protocol, n, self.variant, &config)?;
        }
        Ok(())
    }
}

/// Seed of run `run_id` at size `n`.
pub fn run_seed(master_seed: u64, n: usize, run_id: u64) -> u64 {
    derive_seed(&[master_seed, n as u64, run_id])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: u64,
    pub result: RunResult,
}

/// Runs every `(n, run_id)` of the batch, sorted by `(n, run_id)`.
pub fn run_batch(config: &BatchConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let run_config = config.run_config()?;
    let mut jobs: Vec<(usize, u64)> = config
        .n_values
        .iter()
        .flat_map(|&n| (0..config.runs_per_n).map(move |id| (n, id)))
        .collect();
    jobs.sort_unstable();
    jobs.dedup();

    let one = |&(n, run_id): &(usize, u64)| -> Result<RunRecord> {
        let seed = run_seed(config.master_seed, n, run_id);
        let result = run_protocol(config.protocol, n, config.variant, seed, &run_config)?;
        Ok(RunRecord { run_id, result })
    };

    if config.jobs == 1 {
        return jobs.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    // collect() on an indexed parallel iterator preserves input order
    pool.install(|| jobs.par_iter().map(one).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub runs: u64,
    /// Statistics over runs that were not aborted; NaN if there are none.
    pub mean_phases: f64,
    pub std_phases: f64,
    pub min_phases: u64,
    pub max_phases: u64,
    pub correct: u64,
    /// Completed runs with a wrong count or split termination.
    pub incorrect: u64,
    pub aborted: u64,
    /// Slots per phase shared by every completed run, if uniform.
    pub slots_per_phase: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub protocol: Protocol,
    pub variant: ModelVariant,
    pub rows: Vec<SummaryRow>,
}

impl BatchSummary {
    pub fn total_runs(&self) -> u64 {
        self.rows.iter().map(|r| r.runs).sum()
    }

    pub fn total_incorrect(&self) -> u64 {
        self.rows.iter().map(|r| r.incorrect).sum()
    }

    pub fn total_aborted(&self) -> u64 {
        self.rows.iter().map(|r| r.aborted).sum()
    }

    /// Fraction of completed runs with a wrong result.
    pub fn failure_rate(&self) -> f64 {
        let done = self.total_runs() - self.total_aborted();
        self.total_incorrect() as f64 / done as f64
    }

    /// Fails a Las Vegas batch that has any incorrect or aborted run.
    pub fn check_las_vegas(&self) -> Result<()> {
        if !self.protocol.is_las_vegas() {
            return Ok(());
        }
        let (bad, aborted) = (self.total_incorrect(), self.total_aborted());
        if bad + aborted > 0 {
            return Err(Error::Invariant {
                phase: 0,
                detail: format!(
                    "Las Vegas batch for {} had {bad} incorrect and {aborted} aborted runs",
                    self.protocol
                ),
            });
        }
        Ok(())
    }

    pub fn regression(&self) -> Result<Regression> {
        let points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.mean_phases.is_finite())
            .map(|r| (r.n as f64, r.mean_phases))
            .collect();
        linear_regression(&points)
    }
}

/// Aggregates runs per `n`. The result does not depend on the order of
/// `results`.
pub fn summarize(results: &[RunRecord]) -> Result<BatchSummary> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot summarize an empty batch".into()))?;
    let (protocol, variant) = (first.result.protocol, first.result.variant);
    if results
        .iter()
        .any(|r| r.result.protocol != protocol || r.result.variant != variant)
    {
        return Err(Error::InvalidInput(
            "a summary covers a single protocol and variant".into(),
        ));
    }
    let mut by_n: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for rec in results {
        by_n.entry(rec.result.n).or_default().push(rec);
    }
    let rows = by_n
        .into_iter()
        .map(|(n, mut recs)| {
            recs.sort_by_key(|r| r.run_id);
            summarize_one(n, &recs)
        })
        .collect();
    Ok(BatchSummary {
        protocol,
        variant,
        rows,
    })
}

fn summarize_one(n: usize, recs: &[&RunRecord]) -> SummaryRow {
    let done: Vec<&RunResult> = recs
        .iter()
        .map(|r| &r.result)
        .filter(|r| !r.aborted)
        .collect();
    let phases: Vec<f64> = done.iter().map(|r| r.phases as f64).collect();
    let (mean, std) = mean_and_sample_std(&phases);
    let mut spp = done.iter().map(|r| r.slots / r.phases.max(1));
    let first_spp = spp.next();
    let uniform = first_spp.filter(|&s| spp.all(|x| x == s));
    let correct = done.iter().filter(|r| r.correct).count() as u64;
    SummaryRow {
        n,
        runs: recs.len() as u64,
        mean_phases: mean,
        std_phases: std,
        min_phases: done.iter().map(|r| r.phases).min().unwrap_or(0),
        max_phases: done.iter().map(|r| r.phases).max().unwrap_or(0),
        correct,
        incorrect: done.len() as u64 - correct,
        aborted: (recs.len() - done.len()) as u64,
        slots_per_phase: uniform,
    }
}

/// Mean and sample standard deviation (`n - 1` denominator). A single
/// value has deviation 0; an empty slice gives NaN for both.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], 0.0),
        len => {
            let mean = values.iter().sum::<f64>() / len as f64;
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (mean, (ss / (len - 1) as f64).sqrt())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope divided by the slope.
    pub relative_error: f64,
}

/// Unweighted least-squares fit of `y` against `x`.
pub fn linear_regression(points: &[(f64, f64)]) -> Result<Regression> {
    let m = points.len();
    let distinct = points
        .iter()
        .any(|&(x, _)| x != points.first().map_or(x, |p| p.0));
    if m < 2 || !distinct {
        return Err(Error::InvalidInput(
            "regression needs at least two distinct x values".into(),
        ));
    }
    let mf = m as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / mf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / mf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let relative_error = if m > 2 {
        let sse: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        ((sse / (mf - 2.0)) / sxx).sqrt() / slope.abs()
    } else {
        0.0
    };
    Ok(Regression {
        slope,
        intercept,
        relative_error,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::MalformedCsv {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn bool_field(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Results CSV, rows sorted by `(n, run_id)`.
pub fn results_csv(results: &[RunRecord]) -> Vec<u8> {
    let mut sorted: Vec<&RunRecord> = results.iter().collect();
    sorted.sort_by_key(|r| (r.result.n, r.run_id));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for rec in sorted {
        let r = &rec.result;
        w.write_record([
            r.protocol.id().to_string(),
            r.variant.name().to_string(),
            r.n.to_string(),
            rec.run_id.to_string(),
            r.seed.to_string(),
            r.phases.to_string(),
            r.slots.to_string(),
            bool_field(r.correct).to_string(),
            r.min_size().to_string(),
            r.max_size().to_string(),
            bool_field(r.aborted).to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn summary_csv(summary: &BatchSummary) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for row in &summary.rows {
        w.write_record([
            summary.protocol.id().to_string(),
            summary.variant.name().to_string(),
            row.n.to_string(),
            row.runs.to_string(),
            format!("{:?}", row.mean_phases),
            format!("{:?}", row.std_phases),
            row.min_phases.to_string(),
            row.max_phases.to_string(),
            row.incorrect.to_string(),
            row.aborted.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))
}

pub fn write_results_csv(results: &[RunRecord], path: &Path) -> Result<()> {
    write_bytes(path, &results_csv(results))
}

pub fn write_summary_csv(summary: &BatchSummary, path: &Path) -> Result<()> {
    write_bytes(path, &summary_csv(summary))
}

/// One parsed row of a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryPoint {
    pub protocol: String,
    pub variant: String,
    pub n: usize,
    pub mean_phases: f64,
}

/// Reads a summary CSV back; errors carry the offending line number.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryPoint>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(Error::MalformedCsv {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {:?}", SUMMARY_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |field: &str| Error::MalformedCsv {
            path: path.to_path_buf(),
            line,
            message: format!("invalid {field}"),
        };
        points.push(SummaryPoint {
            protocol: record[0].to_string(),
            variant: record[1].to_string(),
            n: record[2].parse().map_err(|_| bad("n"))?,
            mean_phases: record[4].parse().map_err(|_| bad("mean_phases"))?,
        });
    }
    Ok(points)
}
