//! LP / non-LP routing.
//!
//! A fitted equation whose exponents are all integers is accepted as a
//! Laurent polynomial. Otherwise the data is handed to an external solver,
//! run as a shell command that receives the dataset as a CSV file.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::error::Result;
use crate::lp::{LaurentPolynomial, LaurentTerm};
use crate::trainer::{fit, FitReport, TrainConfig};

pub const INPUT_PLACEHOLDER: &str = "{input}";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffendingExponent {
    pub term: usize,
    pub var: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpVerdict {
    pub is_lp: bool,
    pub offending_exponents: Vec<OffendingExponent>,
}

fn is_integer(e: f64, tol: f64) -> bool {
    (e - e.round()).abs() <= tol
}

/// An equation is a Laurent polynomial when every exponent lies within
/// `integer_snap_tol` of an integer.
pub fn classify_lp(eq: &LaurentPolynomial, integer_snap_tol: f64) -> LpVerdict {
    let offending_exponents: Vec<OffendingExponent> = eq
        .terms()
        .iter()
        .enumerate()
        .flat_map(|(term, t)| {
            t.exponents
                .iter()
                .enumerate()
                .filter(|(_, &e)| !is_integer(e, integer_snap_tol))
                .map(move |(var, &value)| OffendingExponent { term, var, value })
        })
        .collect();
    LpVerdict {
        is_lp: offending_exponents.is_empty(),
        offending_exponents,
    }
}

/// Replaces every exponent within `integer_snap_tol` of an integer by that
/// integer; other exponents are kept.
pub fn snap_integer_exponents(eq: &LaurentPolynomial, integer_snap_tol: f64) -> LaurentPolynomial {
    let terms = eq
        .terms()
        .iter()
        .map(|t| {
            let exponents = t
                .exponents
                .iter()
                .map(|&e| {
                    if is_integer(e, integer_snap_tol) {
                        e.round() + 0.0
                    } else {
                        e
                    }
                })
                .collect();
            LaurentTerm::new(t.coefficient, exponents)
        })
        .collect();
    LaurentPolynomial::new(eq.nvars(), terms)
        .expect("snapping preserves shape")
        .canonicalize()
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("command template must contain {INPUT_PLACEHOLDER} exactly once: {0:?}")]
    Template(String),
    #[error("could not start secondary solver: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("secondary solver timed out after {after:?}")]
    Timeout { after: Duration, stderr: String },
    #[error("secondary solver exited with status {code:?}")]
    ExitStatus { code: Option<i32>, stderr: String },
    #[error("secondary solver printed no equation")]
    EmptyOutput { stderr: String },
}

impl AdapterError {
    pub fn stderr(&self) -> Option<&str> {
        match self {
            AdapterError::Timeout { stderr, .. }
            | AdapterError::ExitStatus { stderr, .. }
            | AdapterError::EmptyOutput { stderr } => Some(stderr),
            _ => None,
        }
    }
}

/// An external symbolic-regression command.
///
/// `{input}` in the template is replaced by the single-quoted path of a CSV
/// copy of the dataset, and the result is run with `sh -c`. The first line
/// of stdout is taken as the equation.
#[derive(Debug, Clone)]
pub struct SecondaryAdapter {
    command_template: String,
    pub timeout: Duration,
    pub working_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondaryOutput {
    pub equation: String,
    pub stderr: String,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl SecondaryAdapter {
    pub fn new(
        command_template: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, AdapterError> {
        let command_template = command_template.into();
        if command_template.matches(INPUT_PLACEHOLDER).count() != 1 {
            return Err(AdapterError::Template(command_template));
        }
        Ok(Self {
            command_template,
            timeout,
            working_dir: None,
        })
    }

    pub fn command_template(&self) -> &str {
        &self.command_template
    }

    pub fn run(&self, data: &Dataset) -> Result<SecondaryOutput, AdapterError> {
        let dir = tempfile::tempdir().map_err(AdapterError::Spawn)?;
        let path = dir.path().join("data.csv");
        data.save_csv(&path)
            .map_err(|e| AdapterError::Spawn(std::io::Error::other(e.to_string())))?;
        let command = self
            .command_template
            .replace(INPUT_PLACEHOLDER, &shell_quote(&path.to_string_lossy()));

        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(&command)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // own process group, so a timeout can take down the whole pipeline
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        if let Some(wd) = &self.working_dir {
            cmd.current_dir(wd);
        }
        let mut child = cmd.spawn().map_err(AdapterError::Spawn)?;

        let drain = |mut pipe: Box<dyn Read + Send>| {
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = pipe.read_to_end(&mut buf);
                String::from_utf8_lossy(&buf).into_owned()
            })
        };
        let stdout = drain(Box::new(child.stdout.take().expect("piped")));
        let stderr = drain(Box::new(child.stderr.take().expect("piped")));

        let start = Instant::now();
        let status = loop {
            match child.try_wait().map_err(AdapterError::Spawn)? {
                Some(status) => break Some(status),
                None if start.elapsed() >= self.timeout => {
                    let _ = Command::new("kill")
                        .args(["-s", "KILL", "--", &format!("-{}", child.id())])
                        .status();
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        let stdout = stdout.join().unwrap_or_default();
        let stderr = stderr.join().unwrap_or_default();

        let Some(status) = status else {
            return Err(AdapterError::Timeout {
                after: self.timeout,
                stderr,
            });
        };
        if !status.success() {
            return Err(AdapterError::ExitStatus {
                code: status.code(),
                stderr,
            });
        }
        match stdout.lines().next().map(str::trim) {
            Some(line) if !line.is_empty() => Ok(SecondaryOutput {
                equation: line.to_string(),
                stderr,
            }),
            _ => Err(AdapterError::EmptyOutput { stderr }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// The fitted equation passed the integer-exponent test.
    Lp,
    /// The secondary solver produced the final equation.
    Secondary,
    /// Non-LP and no usable secondary output.
    Rejected,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub fit: FitReport,
    pub route: Route,
    /// The accepted equation, absent when rejected.
    pub final_equation: Option<String>,
    pub secondary_stderr: Option<String>,
    pub adapter_error: Option<String>,
}

impl EnsembleReport {
    pub fn intermediate(&self) -> &LaurentPolynomial {
        &self.fit.best.equation
    }
}

/// Fits, then routes on the LP verdict. Adapter failures are reported in
/// the returned value along with the rejected fitted equation.
pub fn run_ensemble(
    data: &Dataset,
    config: &TrainConfig,
    adapter: Option<&SecondaryAdapter>,
) -> Result<EnsembleReport> {
    let fit = fit(data, config)?;
    Ok(route(fit, data, adapter))
}

pub(crate) fn route(
    fit: FitReport,
    data: &Dataset,
    adapter: Option<&SecondaryAdapter>,
) -> EnsembleReport {
    if fit.lp_verdict.is_lp {
        let eq = fit.best.equation.to_string();
        return EnsembleReport {
            fit,
            route: Route::Lp,
            final_equation: Some(eq),
            secondary_stderr: None,
            adapter_error: None,
        };
    }
    let Some(adapter) = adapter else {
        return EnsembleReport {
            fit,
            route: Route::Rejected,
            final_equation: None,
            secondary_stderr: None,
            adapter_error: None,
        };
    };
    match adapter.run(data) {
        Ok(out) => EnsembleReport {
            fit,
            route: Route::Secondary,
            final_equation: Some(out.equation),
            secondary_stderr: Some(out.stderr),
            adapter_error: None,
        },
        Err(e) => EnsembleReport {
            fit,
            route: Route::Rejected,
            final_equation: None,
            secondary_stderr: e.stderr().map(str::to_string),
            adapter_error: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::parse_equation;

    #[test]
    fn integer_exponents_are_lp() {
        let eq = parse_equation("x1^2*x2^-1", 2).unwrap();
        assert!(classify_lp(&eq, 1e-3).is_lp);
        assert!(classify_lp(&LaurentPolynomial::zero(3), 1e-3).is_lp);
    }

    #[test]
    fn fractional_exponent_is_reported() {
        let eq = parse_equation("x1^2.342*x2^2", 2).unwrap();
        let v = classify_lp(&eq, 1e-3);
        assert!(!v.is_lp);
        assert_eq!(
            v.offending_exponents,
            vec![OffendingExponent {
                term: 0,
                var: 0,
                value: 2.342
            }]
        );
    }

    #[test]
    fn snapping_within_tolerance() {
        let eq = parse_equation("x1^1.999*x2^-0.9995 + x1^0.5", 2).unwrap();
        assert!(!classify_lp(&eq, 1e-3).is_lp);
        let snapped = snap_integer_exponents(&eq, 1e-3);
        assert_eq!(snapped.to_string(), "x1^2*x2^-1 + x1^0.5");
        let reordered = parse_equation("x1^0.5 + x1^1.999*x2^-0.9995", 2).unwrap();
        assert_eq!(
            classify_lp(&reordered, 1e-3).is_lp,
            classify_lp(&eq, 1e-3).is_lp
        );
    }

    #[test]
    fn template_needs_one_placeholder() {
        assert!(SecondaryAdapter::new("echo hi", DEFAULT_TIMEOUT).is_err());
        assert!(SecondaryAdapter::new("cat {input} {input}", DEFAULT_TIMEOUT).is_err());
        assert!(SecondaryAdapter::new("cat {input}", DEFAULT_TIMEOUT).is_ok());
    }

    fn tiny() -> Dataset {
        Dataset::new(vec![1.0, 2.0], vec!["x1".into()], vec![1.0, 2.0], "y").unwrap()
    }

    #[test]
    fn adapter_reads_first_line() {
        let a = SecondaryAdapter::new(
            "test -s {input} && printf 'sin(x1)/x2\\nignored\\n'; echo warn >&2",
            DEFAULT_TIMEOUT,
        )
        .unwrap();
        let out = a.run(&tiny()).unwrap();
        assert_eq!(out.equation, "sin(x1)/x2");
        assert_eq!(out.stderr, "warn\n");
    }

    #[test]
    fn adapter_sees_the_csv() {
        let a = SecondaryAdapter::new("head -n 1 {input}", DEFAULT_TIMEOUT).unwrap();
        assert_eq!(a.run(&tiny()).unwrap().equation, "x1,y");
    }

    #[test]
    fn adapter_failures() {
        let fail =
            SecondaryAdapter::new("echo boom >&2; exit 3 # {input}", DEFAULT_TIMEOUT).unwrap();
        match fail.run(&tiny()) {
            Err(AdapterError::ExitStatus {
                code: Some(3),
                stderr,
            }) => assert_eq!(stderr, "boom\n"),
            other => panic!("{other:?}"),
        }
        let empty = SecondaryAdapter::new("true {input}", DEFAULT_TIMEOUT).unwrap();
        assert!(matches!(
            empty.run(&tiny()),
            Err(AdapterError::EmptyOutput { .. })
        ));
        let slow = SecondaryAdapter::new("sleep 5 # {input}", Duration::from_millis(100)).unwrap();
        let start = Instant::now();
        assert!(matches!(
            slow.run(&tiny()),
            Err(AdapterError::Timeout { .. })
        ));
        assert!(start.elapsed() < Duration::from_secs(4));
    }
}
