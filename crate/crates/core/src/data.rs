//! Datasets: synthetic generation from a ground-truth polynomial, target
//! noise, irrelevant inputs, CSV I/O and random splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LaurentPolynomial;
use crate::seed::{self, stream};

/// Per-variable sampling range used when none is given.
pub const DEFAULT_RANGE: (f64, f64) = (0.5, 3.0);

pub const DEFAULT_TARGET: &str = "y";

/// How a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub equation: String,
    pub ranges: Vec<(f64, f64)>,
    pub n_points: usize,
    pub noise_fraction: f64,
    pub irrelevant_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub ranges: Vec<(f64, f64)>,
    pub n_points: usize,
    #[serde(default)]
    pub noise_fraction: f64,
    #[serde(default)]
    pub irrelevant_inputs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SamplingSpec {
    pub fn uniform(nvars: usize, n_points: usize, seed: u64) -> Self {
        Self {
            ranges: vec![DEFAULT_RANGE; nvars],
            n_points,
            noise_fraction: 0.0,
            irrelevant_inputs: 0,
            seed,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (index, &(low, high)) in self.ranges.iter().enumerate() {
            if !(low > 0.0 && high > low && high.is_finite()) {
                return Err(Error::InvalidRange { index, low, high });
            }
        }
        if self.n_points == 0 {
            return Err(Error::Empty("n_points"));
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise fraction must be >= 0, got {}",
                self.noise_fraction
            )));
        }
        Ok(())
    }
}

/// Strictly positive inputs (row-major) with a real target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    ncols: usize,
    targets: Vec<f64>,
    column_names: Vec<String>,
    target_name: String,
    /// Noise-free targets, when known.
    clean_targets: Option<Vec<f64>>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    /// Builds a dataset from row-major inputs, validating positivity and
    /// finiteness.
    pub fn new(
        inputs: Vec<f64>,
        column_names: Vec<String>,
        targets: Vec<f64>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let ncols = column_names.len();
        if ncols == 0 {
            return Err(Error::Empty("input columns"));
        }
        if targets.is_empty() {
            return Err(Error::Empty("rows"));
        }
        if inputs.len() != ncols * targets.len() {
            return Err(Error::DimensionMismatch {
                expected: ncols * targets.len(),
                got: inputs.len(),
            });
        }
        for (k, &v) in inputs.iter().enumerate() {
            let (row, col) = (k / ncols, k % ncols);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: column_names[col].clone(),
                });
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveInput {
                    row,
                    column: column_names[col].clone(),
                    value: v,
                });
            }
        }
        let target_name = target_name.into();
        if let Some(row) = targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                row,
                column: target_name,
            });
        }
        Ok(Self {
            inputs,
            ncols,
            targets,
            column_names,
            target_name,
            clean_targets: None,
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn clean_targets(&self) -> Option<&[f64]> {
        self.clean_targets.as_deref()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.ncols);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        Dataset {
            inputs,
            ncols: self.ncols,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            column_names: self.column_names.clone(),
            target_name: self.target_name.clone(),
            clean_targets: self
                .clean_targets
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, target)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, target: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        let target_col = headers
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| Error::MissingTarget(target.to_string()))?;
        let column_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target_col)
            .map(|(_, h)| h.to_string())
            .collect();

        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            for (i, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| Error::Csv {
                    line,
                    message: format!(
                        "column `{}`: cannot parse {field:?} as a number",
                        &headers[i]
                    ),
                })?;
                if i == target_col {
                    targets.push(value);
                } else {
                    inputs.push(value);
                }
            }
        }
        Self::new(inputs, column_names, targets, target)
    }

    /// Writes the header then one row per point; values use the shortest
    /// representation that parses back to the same double.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let header = self
            .column_names
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.target_name.as_str()));
        w.write_record(header).map_err(csv_error)?;
        for i in 0..self.len() {
            let row = self
                .row(i)
                .iter()
                .chain(std::iter::once(&self.targets[i]))
                .map(|v| v.to_string());
            w.write_record(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Samples inputs uniformly per range and evaluates `gt` on them, then
/// applies target noise and irrelevant inputs as the spec requests.
pub fn generate(gt: &LaurentPolynomial, spec: &SamplingSpec) -> Result<Dataset> {
    if spec.ranges.len() != gt.nvars() {
        return Err(Error::DimensionMismatch {
            expected: gt.nvars(),
            got: spec.ranges.len(),
        });
    }
    spec.validate()?;

    let nvars = gt.nvars();
    let mut rng = seed::rng(seed::derive(spec.seed, &[stream::INPUTS]));
    let mut inputs = Vec::with_capacity(spec.n_points * nvars);
    let mut targets = Vec::with_capacity(spec.n_points);
    for _ in 0..spec.n_points {
        let start = inputs.len();
        inputs.extend(spec.ranges.iter().map(|&(lo, hi)| rng.random_range(lo..hi)));
        targets.push(gt.evaluate(&inputs[start..])?);
    }

    let names = (1..=nvars).map(|j| format!("x{j}")).collect();
    let mut data = Dataset::new(inputs, names, targets, DEFAULT_TARGET)?;
    data.provenance = Some(Provenance {
        equation: gt.to_string(),
        ranges: spec.ranges.clone(),
        n_points: spec.n_points,
        noise_fraction: spec.noise_fraction,
        irrelevant_count: 0,
        seed: spec.seed,
    });
    data.clean_targets = Some(data.targets.clone());
    data.targets = add_noise(
        &data.targets,
        spec.noise_fraction,
        seed::derive(spec.seed, &[stream::NOISE]),
    );
    add_irrelevant(
        &data,
        spec.irrelevant_inputs,
        seed::derive(spec.seed, &[stream::IRRELEVANT]),
    )
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Adds Gaussian noise with standard deviation `noise_fraction * RMS(targets)`.
pub fn add_noise(targets: &[f64], noise_fraction: f64, seed: u64) -> Vec<f64> {
    let sigma = noise_fraction * rms(targets);
    if sigma.is_nan() || sigma <= 0.0 {
        return targets.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = seed::rng(seed);
    targets
        .iter()
        .map(|y| y + normal.sample(&mut rng))
        .collect()
}

/// Appends `count` columns `z1, z2, ...` drawn uniformly over the union of
/// the existing sampling ranges (or observed input range when the dataset
/// has no provenance). Targets are untouched.
pub fn add_irrelevant(data: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Ok(data.clone());
    }
    let (lo, hi) = match &data.provenance {
        Some(p) if !p.ranges.is_empty() => p
            .ranges
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(a, b)| {
                (lo.min(a), hi.max(b))
            }),
        _ => data
            .inputs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
    };
    let mut rng = seed::rng(seed);
    let existing_z = data
        .column_names
        .iter()
        .filter(|n| n.starts_with('z'))
        .count();
    let ncols = data.ncols + count;
    let mut inputs = Vec::with_capacity(data.len() * ncols);
    for i in 0..data.len() {
        inputs.extend_from_slice(data.row(i));
        for _ in 0..count {
            let v = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            inputs.push(v);
        }
    }
    let mut column_names = data.column_names.clone();
    column_names.extend((1..=count).map(|k| format!("z{}", existing_z + k)));

    let mut out = Dataset::new(
        inputs,
        column_names,
        data.targets.clone(),
        data.target_name.clone(),
    )?;
    out.clean_targets = data.clean_targets.clone();
    out.provenance = data.provenance.clone().map(|mut p| {
        p.irrelevant_count += count;
        p
    });
    Ok(out)
}

/// Random permutation split; `fraction` of the rows go to the first part.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (first, second) = split_indices(data.len(), fraction, seed)?;
    Ok((data.subset(&first), data.subset(&second)))
}

pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_first = (n as f64 * fraction).round() as usize;
    if n_first == 0 || n_first >= n {
        return Err(Error::DegenerateSplit {
            train: n_first.min(n),
            test: n - n_first.min(n),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let second = order.split_off(n_first);
    Ok((order, second))
}
