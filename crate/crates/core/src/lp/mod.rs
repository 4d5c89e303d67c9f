//! Multivariate Laurent polynomials: `sum_i c_i * prod_j x_j^{p_ij}`.
//!
//! This is the output language of the fitter. Exponents are stored as reals
//! so that unrounded network weights can be represented; a polynomial is a
//! proper Laurent polynomial only when every exponent is an integer (see
//! [`crate::ensemble::classify_lp`]).

mod complexity;
mod parse;
mod search;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use complexity::{complexity, ComplexityBreakdown};
pub use parse::{parse_equation, parse_equation_infer, ParseError};
pub use search::{search_space, SearchSpaceResult};

/// Default relative tolerance when comparing recovered coefficients.
pub const DEFAULT_COEFF_RTOL: f64 = 1e-3;

/// Grid on which exponents are compared by [`equals_exact`].
const EXPONENT_GRID: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentTerm {
    pub coefficient: f64,
    pub exponents: Vec<f64>,
}

impl LaurentTerm {
    pub fn new(coefficient: f64, exponents: Vec<f64>) -> Self {
        Self {
            coefficient,
            exponents,
        }
    }

    /// Number of variables with a nonzero exponent.
    pub fn degree_support(&self) -> usize {
        self.exponents.iter().filter(|&&e| e != 0.0).count()
    }

    fn monomial(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .filter(|(&e, _)| e != 0.0)
            .map(|(&e, &xj)| power(xj, e))
            .product()
    }
}

fn power(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentPolynomial {
    nvars: usize,
    terms: Vec<LaurentTerm>,
}

impl LaurentPolynomial {
    /// Builds a polynomial, checking every term against `nvars`. The result is
    /// not canonicalized.
    pub fn new(nvars: usize, terms: Vec<LaurentTerm>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if t.exponents.len() != nvars {
                return Err(Error::InvalidPolynomial(format!(
                    "term {i} has {} exponents, expected {nvars}",
                    t.exponents.len()
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::InvalidPolynomial(format!(
                    "term {i} has non-finite coefficient"
                )));
            }
            if t.exponents.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidPolynomial(format!(
                    "term {i} has a non-finite exponent"
                )));
            }
        }
        Ok(Self { nvars, terms })
    }

    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
        }
    }

    pub fn constant(nvars: usize, value: f64) -> Self {
        Self {
            nvars,
            terms: vec![LaurentTerm::new(value, vec![0.0; nvars])],
        }
        .canonicalize()
    }

    /// A single term `coefficient * prod x_j^{exponents_j}`.
    pub fn monomial(coefficient: f64, exponents: Vec<f64>) -> Self {
        let nvars = exponents.len();
        Self {
            nvars,
            terms: vec![LaurentTerm::new(coefficient, exponents)],
        }
        .canonicalize()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[LaurentTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn exponents(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().flat_map(|t| t.exponents.iter().copied())
    }

    /// Re-embeds the polynomial into `nvars` variables, appending unused
    /// trailing variables. Fails if that would drop a variable in use.
    pub fn with_nvars(&self, nvars: usize) -> Result<Self> {
        if nvars < self.nvars
            && self
                .terms
                .iter()
                .any(|t| t.exponents[nvars..].iter().any(|&e| e != 0.0))
        {
            return Err(Error::InvalidPolynomial(format!(
                "cannot shrink to {nvars} variables: a dropped variable is in use"
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut exponents = t.exponents.clone();
                exponents.resize(nvars, 0.0);
                LaurentTerm::new(t.coefficient, exponents)
            })
            .collect();
        Ok(Self { nvars, terms })
    }

    /// `sum_i c_i prod_j x_j^{p_ij}`.
    ///
    /// Nonpositive inputs are accepted only for variables that appear with
    /// nonnegative integer exponents in every term.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        for (j, &xj) in x.iter().enumerate() {
            if xj > 0.0 {
                continue;
            }
            let bad = self.terms.iter().any(|t| {
                let e = t.exponents[j];
                e.fract() != 0.0 || e < 0.0
            });
            if bad || !xj.is_finite() {
                return Err(Error::Domain {
                    index: j,
                    value: xj,
                });
            }
        }
        Ok(self
            .terms
            .iter()
            .map(|t| t.coefficient * t.monomial(x))
            .sum())
    }

    /// Merges terms with identical exponent vectors, drops zero coefficients
    /// and sorts terms by exponent vector, lexicographically descending.
    pub fn canonicalize(&self) -> Self {
        let mut terms: Vec<LaurentTerm> = self
            .terms
            .iter()
            .map(|t| LaurentTerm {
                coefficient: t.coefficient,
                // fold -0.0 into 0.0 so equal vectors compare equal
                exponents: t.exponents.iter().map(|&e| e + 0.0).collect(),
            })
            .collect();
        terms.sort_by(|a, b| cmp_exponents(&b.exponents, &a.exponents));

        let mut merged: Vec<LaurentTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.exponents == t.exponents => last.coefficient += t.coefficient,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coefficient != 0.0);
        Self {
            nvars: self.nvars,
            terms: merged,
        }
    }

    /// Rounds every coefficient to a multiple of `precision` and drops the
    /// terms that vanish. Clears float noise left by merging rounded terms.
    pub fn round_coefficients(&self, precision: f64) -> Self {
        let mut out = self.canonicalize();
        for t in &mut out.terms {
            t.coefficient = crate::network::round_to(t.coefficient, precision);
        }
        out.terms.retain(|t| t.coefficient != 0.0);
        out
    }

    pub fn is_canonical(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient != 0.0)
            && self
                .terms
                .windows(2)
                .all(|w| cmp_exponents(&w[0].exponents, &w[1].exponents) == Ordering::Greater)
    }
}

impl fmt::Display for LaurentPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&parse::print_equation(self))
    }
}

pub(crate) fn cmp_exponents(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn exponent_key(exponents: &[f64]) -> Vec<i64> {
    exponents
        .iter()
        .map(|&e| (e / EXPONENT_GRID).round() as i64)
        .collect()
}

/// Structural equality up to coefficient tolerance.
///
/// Exponent vectors must coincide on the 0.001 grid; coefficients must agree
/// within `coeff_rtol` relative to the larger magnitude, or absolutely when
/// both magnitudes are below one.
pub fn equals_exact(a: &LaurentPolynomial, b: &LaurentPolynomial, coeff_rtol: f64) -> bool {
    if a.nvars != b.nvars {
        return false;
    }
    let keyed = |p: &LaurentPolynomial| {
        let mut v: Vec<(Vec<i64>, f64)> = p
            .canonicalize()
            .terms
            .iter()
            .map(|t| (exponent_key(&t.exponents), t.coefficient))
            .collect();
        v.sort_by(|x, y| x.0.cmp(&y.0));
        v
    };
    let (ka, kb) = (keyed(a), keyed(b));
    ka.len() == kb.len()
        && ka.iter().zip(&kb).all(|((ea, ca), (eb, cb))| {
            let scale = ca.abs().max(cb.abs()).max(1.0);
            ea == eb && (ca - cb).abs() <= coeff_rtol * scale
        })
}
