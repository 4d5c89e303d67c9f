use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    complexity_binning, mean_squared_error, r_squared, rate_stats, solution_rate, ComplexityBin,
    RateStats, DEFAULT_BIN_EDGES,
};
use crate::data::{generate, split, SamplingSpec, DEFAULT_RANGE};
use crate::ensemble::{route, Route, SecondaryAdapter};
use crate::error::{Error, Result};
use crate::lp::{
    complexity, equals_exact, parse_equation, parse_equation_infer, LaurentPolynomial,
};
use crate::seed::{self, stream};
use crate::trainer::{fit, TrainConfig};

/// Share of each generated dataset used for fitting.
pub const TRAIN_FRACTION: f64 = 0.75;
/// R² threshold behind the accuracy figures.
pub const R2_THRESHOLD: f64 = 0.99;

fn default_points() -> usize {
    10_000
}

fn default_trials() -> usize {
    5
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_irrelevant() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub name: String,
    pub equation: String,
    /// One range per variable; defaults to `DEFAULT_RANGE` for each.
    #[serde(default)]
    pub ranges: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

impl SuiteEntry {
    /// The ground truth over its full variable list. Variables are ordered
    /// `x1, x2, ...`; explicit ranges fix the count even when trailing
    /// variables do not appear.
    pub fn ground_truth(&self) -> Result<LaurentPolynomial> {
        let eq = match &self.ranges {
            Some(r) => parse_equation(&self.equation, r.len())?,
            None => parse_equation_infer(&self.equation)?,
        };
        Ok(eq.canonicalize())
    }

    fn sampling(&self, nvars: usize) -> SamplingSpec {
        SamplingSpec {
            ranges: self
                .ranges
                .clone()
                .unwrap_or_else(|| vec![DEFAULT_RANGE; nvars]),
            ..SamplingSpec::uniform(nvars, self.n_points, 0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub entries: Vec<SuiteEntry>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_noise")]
    pub noise_fractions: Vec<f64>,
    #[serde(default = "default_irrelevant")]
    pub irrelevant_counts: Vec<usize>,
    #[serde(default)]
    pub master_seed: u64,
}

impl SuiteSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let suite: Self = serde_json::from_str(text)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Empty("suite entries"));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.noise_fractions.is_empty() || self.irrelevant_counts.is_empty() {
            return Err(Error::InvalidConfig(
                "noise_fractions and irrelevant_counts must not be empty".into(),
            ));
        }
        for entry in &self.entries {
            let gt = entry.ground_truth()?;
            entry.sampling(gt.nvars()).validate_for(&gt)?;
        }
        for &noise in &self.noise_fractions {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::InvalidConfig(format!("bad noise fraction {noise}")));
            }
        }
        Ok(())
    }
}

impl SamplingSpec {
    fn validate_for(&self, gt: &LaurentPolynomial) -> Result<()> {
        if self.ranges.len() != gt.nvars() {
            return Err(Error::DimensionMismatch {
                expected: gt.nvars(),
                got: self.ranges.len(),
            });
        }
        self.validate()
    }
}

/// Outcome of one (entry, trial, noise, irrelevant-count) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub entry: String,
    pub entry_index: usize,
    pub trial: usize,
    pub noise: f64,
    pub irrelevant: usize,
    pub recovered: bool,
    /// Against the stored (possibly noisy) test targets.
    pub r2_test: Option<f64>,
    /// Against the noiseless test targets.
    pub r2_clean: Option<f64>,
    pub mse_test: Option<f64>,
    /// Complexity of the ground truth.
    pub complexity: u32,
    pub blocks: usize,
    #[serde(skip)]
    pub wall_time: Duration,
    pub equation: String,
    pub lp_verdict: bool,
    pub route: Option<Route>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingSummary {
    pub noise: f64,
    pub irrelevant: usize,
    pub cells: usize,
    pub solution_rate: f64,
    pub r2_gt_099_accuracy: f64,
    pub r2_clean_gt_099_accuracy: f64,
    /// Spread of the per-trial solution rates.
    pub trials: RateStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntrySummary {
    pub name: String,
    pub complexity: u32,
    pub solution_rate: f64,
    pub r2_gt_099_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub entry: String,
    pub trial: usize,
    pub noise: f64,
    pub irrelevant: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub cells: usize,
    pub solution_rate: f64,
    pub r2_gt_099_accuracy: f64,
    pub r2_clean_gt_099_accuracy: f64,
    pub trials: RateStats,
    pub settings: Vec<SettingSummary>,
    pub entries: Vec<EntrySummary>,
    pub complexity_bins: Vec<ComplexityBin>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    /// One row per cell, sorted by entry, trial, noise, irrelevant count.
    pub results: Vec<TrialResult>,
    pub summary: SuiteSummary,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    entry: usize,
    trial: usize,
    noise: usize,
    irrelevant: usize,
}

/// Seed of the generated data; shared by every noise level and
/// irrelevant-input count of one entry and trial.
fn data_seed(suite: &SuiteSpec, cell: Cell) -> u64 {
    seed::derive(suite.master_seed, &[cell.entry as u64, cell.trial as u64])
}

fn fit_seed(suite: &SuiteSpec, cell: Cell) -> u64 {
    seed::derive(
        suite.master_seed,
        &[
            cell.entry as u64,
            cell.trial as u64,
            cell.noise as u64,
            cell.irrelevant as u64,
            stream::INIT,
        ],
    )
}

/// Runs every cell of `suite`. `parallel` caps the worker threads (the
/// rayon default when `None`); results do not depend on it.
pub fn run_suite(
    suite: &SuiteSpec,
    config: &TrainConfig,
    adapter: Option<&SecondaryAdapter>,
    parallel: Option<usize>,
) -> Result<SuiteReport> {
    suite.validate()?;
    config.validate()?;
    let truths = suite
        .entries
        .iter()
        .map(SuiteEntry::ground_truth)
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for entry in 0..suite.entries.len() {
        for trial in 0..suite.trials {
            for noise in 0..suite.noise_fractions.len() {
                for irrelevant in 0..suite.irrelevant_counts.len() {
                    cells.push(Cell {
                        entry,
                        trial,
                        noise,
                        irrelevant,
                    });
                }
            }
        }
    }

    let run = || -> Vec<TrialResult> {
        cells
            .par_iter()
            .map(|&cell| run_cell(suite, config, adapter, &truths[cell.entry], cell))
            .collect()
    };
    let results = match parallel {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run),
        None => run(),
    };
    let summary = summarize(suite, &results)?;
    Ok(SuiteReport { results, summary })
}

fn run_cell(
    suite: &SuiteSpec,
    config: &TrainConfig,
    adapter: Option<&SecondaryAdapter>,
    gt: &LaurentPolynomial,
    cell: Cell,
) -> TrialResult {
    let entry = &suite.entries[cell.entry];
    let mut result = TrialResult {
        entry: entry.name.clone(),
        entry_index: cell.entry,
        trial: cell.trial,
        noise: suite.noise_fractions[cell.noise],
        irrelevant: suite.irrelevant_counts[cell.irrelevant],
        recovered: false,
        r2_test: None,
        r2_clean: None,
        mse_test: None,
        complexity: complexity(gt).total,
        blocks: 0,
        wall_time: Duration::ZERO,
        equation: String::new(),
        lp_verdict: false,
        route: None,
        error: None,
    };
    let start = Instant::now();
    if let Err(e) = fill_cell(suite, config, adapter, gt, cell, &mut result) {
        result.recovered = false;
        result.error = Some(e.to_string());
    }
    result.wall_time = start.elapsed();
    result
}

fn fill_cell(
    suite: &SuiteSpec,
    config: &TrainConfig,
    adapter: Option<&SecondaryAdapter>,
    gt: &LaurentPolynomial,
    cell: Cell,
    out: &mut TrialResult,
) -> Result<()> {
    let entry = &suite.entries[cell.entry];
    let seed = data_seed(suite, cell);
    let spec = SamplingSpec {
        noise_fraction: out.noise,
        irrelevant_inputs: out.irrelevant,
        seed,
        ..entry.sampling(gt.nvars())
    };
    let data = generate(gt, &spec)?;
    let (train, test) = split(&data, TRAIN_FRACTION, seed::derive(seed, &[stream::SPLIT]))?;

    let config = TrainConfig {
        master_seed: fit_seed(suite, cell),
        ..config.clone()
    };
    let report = fit(&train, &config)?;
    if let Some(e) = &report.error {
        return Err(Error::TrainingAborted(e.clone()));
    }
    let eq = report.best.equation.clone();
    out.blocks = report.best.blocks_used;
    out.lp_verdict = report.lp_verdict.is_lp;
    out.equation = eq.to_string();
    out.recovered = equals_exact(&eq, &gt.with_nvars(data.ncols())?, config.coeff_rtol);

    let pred = (0..test.len())
        .map(|i| eq.evaluate(test.row(i)))
        .collect::<Result<Vec<_>>>()?;
    out.mse_test = Some(mean_squared_error(test.targets(), &pred));
    out.r2_test = r_squared(test.targets(), &pred).ok();
    out.r2_clean = test.clean_targets().and_then(|c| r_squared(c, &pred).ok());

    if adapter.is_some() {
        let ens = route(report, &train, adapter);
        if let Some(final_eq) = &ens.final_equation {
            out.equation = final_eq.clone();
        }
        out.route = Some(ens.route);
        if let Some(e) = ens.adapter_error {
            out.error = Some(e);
        }
    }
    Ok(())
}

fn accuracy<'a>(r2: impl Iterator<Item = Option<f64>> + 'a) -> f64 {
    solution_rate(r2.map(|r| r.is_some_and(|v| v > R2_THRESHOLD))).unwrap_or(0.0)
}

fn per_trial(results: &[&TrialResult], trials: usize) -> RateStats {
    let rates: Vec<f64> = (0..trials)
        .filter_map(|t| solution_rate(results.iter().filter(|r| r.trial == t).map(|r| r.recovered)))
        .collect();
    rate_stats(&rates).unwrap_or(RateStats {
        min: 0.0,
        median: 0.0,
        mean: 0.0,
        max: 0.0,
    })
}

fn summarize(suite: &SuiteSpec, results: &[TrialResult]) -> Result<SuiteSummary> {
    let all: Vec<&TrialResult> = results.iter().collect();
    let rate = |rs: &[&TrialResult]| solution_rate(rs.iter().map(|r| r.recovered)).unwrap_or(0.0);

    let mut settings = Vec::new();
    for &noise in &suite.noise_fractions {
        for &irrelevant in &suite.irrelevant_counts {
            let rs: Vec<&TrialResult> = all
                .iter()
                .copied()
                .filter(|r| r.noise == noise && r.irrelevant == irrelevant)
                .collect();
            settings.push(SettingSummary {
                noise,
                irrelevant,
                cells: rs.len(),
                solution_rate: rate(&rs),
                r2_gt_099_accuracy: accuracy(rs.iter().map(|r| r.r2_test)),
                r2_clean_gt_099_accuracy: accuracy(rs.iter().map(|r| r.r2_clean)),
                trials: per_trial(&rs, suite.trials),
            });
        }
    }

    let entries: Vec<EntrySummary> = suite
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let rs: Vec<&TrialResult> =
                all.iter().copied().filter(|r| r.entry_index == i).collect();
            EntrySummary {
                name: e.name.clone(),
                complexity: rs.first().map_or(0, |r| r.complexity),
                solution_rate: rate(&rs),
                r2_gt_099_accuracy: accuracy(rs.iter().map(|r| r.r2_test)),
            }
        })
        .collect();
    let binned: Vec<(u32, f64)> = entries
        .iter()
        .map(|e| (e.complexity, e.solution_rate))
        .collect();

    Ok(SuiteSummary {
        cells: results.len(),
        solution_rate: rate(&all),
        r2_gt_099_accuracy: accuracy(all.iter().map(|r| r.r2_test)),
        r2_clean_gt_099_accuracy: accuracy(all.iter().map(|r| r.r2_clean)),
        trials: per_trial(&all, suite.trials),
        settings,
        entries,
        complexity_bins: complexity_binning(&binned, &DEFAULT_BIN_EDGES)?,
        failures: results
            .iter()
            .filter_map(|r| {
                r.error.as_ref().map(|e| Failure {
                    entry: r.entry.clone(),
                    trial: r.trial,
                    noise: r.noise,
                    irrelevant: r.irrelevant,
                    error: e.clone(),
                })
            })
            .collect(),
    })
}

pub const CSV_HEADER: [&str; 12] = [
    "entry",
    "trial",
    "noise",
    "irrelevant",
    "recovered",
    "r2_test",
    "r2_clean",
    "mse_test",
    "complexity",
    "blocks",
    "wall_ms",
    "equation",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell. `wall_ms` is written as 0 unless `record_timings`.
pub fn write_results_csv<W: std::io::Write>(
    results: &[TrialResult],
    writer: W,
    record_timings: bool,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in results {
        let wall_ms = if record_timings {
            r.wall_time.as_millis() as u64
        } else {
            0
        };
        w.write_record([
            r.entry.clone(),
            r.trial.to_string(),
            r.noise.to_string(),
            r.irrelevant.to_string(),
            r.recovered.to_string(),
            opt(r.r2_test),
            opt(r.r2_clean),
            opt(r.mse_test),
            r.complexity.to_string(),
            r.blocks.to_string(),
            wall_ms.to_string(),
            r.equation.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
