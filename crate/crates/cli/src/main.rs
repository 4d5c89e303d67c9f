use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ginnlp::data::{generate, DEFAULT_RANGE, DEFAULT_TARGET};
use ginnlp::ensemble::{Route, DEFAULT_TIMEOUT};
use ginnlp::harness::{run_suite, write_results_csv, SuiteSpec};
use ginnlp::lp::parse_equation_infer;
use ginnlp::{
    classify_lp, fit, run_ensemble, search_space, Dataset, Error, SamplingSpec, SecondaryAdapter,
    TrainConfig,
};

/// Discover Laurent-polynomial equations from data.
#[derive(Parser)]
#[command(name = "ginnlp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an equation to a CSV dataset and write the report as JSON.
    Fit {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write measured wall-clock times instead of zeros.
        #[arg(long)]
        record_timings: bool,
    },
    /// Sample a dataset from a ground-truth equation.
    Generate {
        #[arg(long)]
        equation: String,
        /// `lo:hi` for every variable, or one comma-separated pair per variable.
        #[arg(long)]
        ranges: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Gaussian noise level as a fraction of the target RMS.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        irrelevant: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark suite and write per-cell results and a summary.
    Benchmark {
        #[arg(long)]
        suite: PathBuf,
        /// Overrides the suite's trial count.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        record_timings: bool,
    },
    /// Fit and report whether the result is a Laurent polynomial.
    Classify {
        #[command(flatten)]
        input: DataArgs,
    },
    /// Fit, and hand non-polynomial datasets to a secondary solver.
    Ensemble {
        #[command(flatten)]
        input: DataArgs,
        /// Shell command with an `{input}` placeholder for the CSV path.
        #[arg(long)]
        secondary_cmd: Option<String>,
        /// Seconds before the secondary solver is killed.
        #[arg(long)]
        timeout: Option<u64>,
    },
    /// Count candidate terms and structures for a polynomial order.
    Searchspace {
        #[arg(long)]
        order: u32,
        #[arg(long)]
        vars: u32,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = DEFAULT_TARGET)]
    target: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Failures mapped onto process exit codes.
enum Failure {
    Input(String),
    Training(String),
    Adapter(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Training(_) => 3,
            Failure::Adapter(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Training(m) | Failure::Adapter(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::TrainingAborted(_) => Failure::Training(e.to_string()),
            Error::Adapter(_) => Failure::Adapter(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit {
            input,
            out,
            record_timings,
        } => cmd_fit(&input, &out, record_timings),
        Command::Generate {
            equation,
            ranges,
            n,
            noise,
            irrelevant,
            seed,
            out,
        } => cmd_generate(
            &equation,
            ranges.as_deref(),
            n,
            noise,
            irrelevant,
            seed,
            &out,
        ),
        Command::Benchmark {
            suite,
            trials,
            out_dir,
            parallel,
            config,
            record_timings,
        } => cmd_benchmark(
            &suite,
            trials,
            &out_dir,
            parallel,
            config.as_deref(),
            record_timings,
        ),
        Command::Classify { input } => cmd_classify(&input),
        Command::Ensemble {
            input,
            secondary_cmd,
            timeout,
        } => cmd_ensemble(&input, secondary_cmd.as_deref(), timeout),
        Command::Searchspace { order, vars } => {
            let r = search_space(order, vars)?;
            println!("T={} S={}", r.term_count, r.structure_count);
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let config: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn load_input(args: &DataArgs) -> Result<(Dataset, TrainConfig), Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let data = Dataset::load_csv(&args.data, &args.target)?;
    Ok((data, config))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn verdict(is_lp: bool) -> &'static str {
    if is_lp {
        "LP"
    } else {
        "NON_LP"
    }
}

fn cmd_fit(args: &DataArgs, out: &Path, record_timings: bool) -> Result<(), Failure> {
    let (data, config) = load_input(args)?;
    let report = fit(&data, &config)?;
    write_json(out, &report.to_json(record_timings))?;
    println!("{}", report.best.equation);
    println!("{}", verdict(report.lp_verdict.is_lp));
    match report.error {
        Some(e) => Err(Failure::Training(e)),
        None => Ok(()),
    }
}

fn parse_range(text: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Input(format!("bad range `{text}`, expected lo:hi"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn parse_ranges(spec: Option<&str>, nvars: usize) -> Result<Vec<(f64, f64)>, Failure> {
    let Some(spec) = spec else {
        return Ok(vec![DEFAULT_RANGE; nvars]);
    };
    let ranges = spec
        .split(',')
        .map(parse_range)
        .collect::<Result<Vec<_>, _>>()?;
    match ranges.len() {
        1 => Ok(vec![ranges[0]; nvars]),
        n if n == nvars => Ok(ranges),
        n => Err(Failure::Input(format!(
            "{n} ranges given for {nvars} variables"
        ))),
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("provenance.json")
}

fn cmd_generate(
    equation: &str,
    ranges: Option<&str>,
    n: usize,
    noise: f64,
    irrelevant: usize,
    seed: u64,
    out: &Path,
) -> Result<(), Failure> {
    let gt = parse_equation_infer(equation).map_err(Error::from)?;
    let spec = SamplingSpec {
        ranges: parse_ranges(ranges, gt.nvars())?,
        n_points: n,
        noise_fraction: noise,
        irrelevant_inputs: irrelevant,
        seed,
    };
    let data = generate(&gt, &spec)?;
    data.save_csv(out)?;
    let provenance = serde_json::to_value(&data.provenance).map_err(Error::from)?;
    write_json(&sidecar_path(out), &provenance)?;
    println!(
        "wrote {} rows, columns {}",
        data.len(),
        data.column_names().join(",")
    );
    Ok(())
}

fn cmd_benchmark(
    suite: &Path,
    trials: Option<usize>,
    out_dir: &Path,
    parallel: Option<usize>,
    config: Option<&Path>,
    record_timings: bool,
) -> Result<(), Failure> {
    let mut spec = SuiteSpec::load(suite)?;
    if let Some(t) = trials {
        spec.trials = t;
    }
    let config = load_config(config)?;
    let report = run_suite(&spec, &config, None, parallel)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Input(format!("{}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("results.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
    write_results_csv(&report.results, file, record_timings)?;
    let summary = serde_json::to_value(&report.summary).map_err(Error::from)?;
    write_json(&out_dir.join("summary.json"), &summary)?;

    let s = &report.summary;
    println!(
        "{:>8} {:>10} {:>6} {:>10} {:>10}",
        "noise", "irrelevant", "cells", "solved%", "r2>0.99%"
    );
    for row in &s.settings {
        println!(
            "{:>8} {:>10} {:>6} {:>10.1} {:>10.1}",
            row.noise, row.irrelevant, row.cells, row.solution_rate, row.r2_gt_099_accuracy
        );
    }
    println!(
        "overall: solution_rate={:.1} r2_gt_099_accuracy={:.1} ({} cells, {} failed)",
        s.solution_rate,
        s.r2_gt_099_accuracy,
        s.cells,
        s.failures.len()
    );
    Ok(())
}

fn cmd_classify(args: &DataArgs) -> Result<(), Failure> {
    let (data, config) = load_input(args)?;
    let report = fit(&data, &config)?;
    if let Some(e) = report.error {
        return Err(Failure::Training(e));
    }
    let v = classify_lp(&report.best.equation, config.integer_snap_tol);
    println!("{} {}", verdict(v.is_lp), report.best.equation);
    Ok(())
}

fn cmd_ensemble(
    args: &DataArgs,
    secondary: Option<&str>,
    timeout: Option<u64>,
) -> Result<(), Failure> {
    let (data, config) = load_input(args)?;
    let timeout = timeout.map_or(DEFAULT_TIMEOUT, Duration::from_secs);
    let adapter = secondary
        .map(|cmd| SecondaryAdapter::new(cmd, timeout))
        .transpose()
        .map_err(Error::from)?;
    let report = run_ensemble(&data, &config, adapter.as_ref())?;
    if let Some(e) = &report.fit.error {
        return Err(Failure::Training(e.clone()));
    }
    println!(
        "ginnlp: {} {}",
        verdict(report.fit.lp_verdict.is_lp),
        report.intermediate()
    );
    if let Some(stderr) = report.secondary_stderr.as_deref().filter(|s| !s.is_empty()) {
        eprint!("{stderr}");
    }
    match (report.route, &report.final_equation) {
        (Route::Lp, Some(eq)) => {
            println!("final: {eq}");
            println!("path: ginnlp");
            Ok(())
        }
        (Route::Secondary, Some(eq)) => {
            println!("final: {eq}");
            println!("path: secondary");
            Ok(())
        }
        _ => Err(Failure::Adapter(
            report.adapter_error.clone().unwrap_or_else(|| {
                "equation is not a Laurent polynomial and no secondary solver is configured".into()
            }),
        )),
    }
}
