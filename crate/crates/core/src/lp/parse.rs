//! Equation strings.
//!
//! ```text
//! poly   := term (('+' | '-') term)*
//! term   := [coeff '*'] factor ('*' factor)* | coeff
//! factor := var ['^' number]
//! var    := 'x' positive-integer
//! ```
//!
//! Numbers are plain decimal literals with an optional sign; no scientific
//! notation. Whitespace between tokens is ignored. A leading `-` directly in
//! front of a variable is accepted on the first term.

use std::fmt::Write as _;

use thiserror::Error;

use super::{LaurentPolynomial, LaurentTerm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax {
        offset: usize,
        expected: &'static str,
    },
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("non-numeric exponent at offset {offset}")]
    BadExponent { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownVariable { offset, .. }
            | ParseError::BadExponent { offset } => *offset,
        }
    }
}

/// Parses `s` as a polynomial in `nvars` variables and canonicalizes it.
pub fn parse_equation(s: &str, nvars: usize) -> Result<LaurentPolynomial, ParseError> {
    let raw = Parser::new(s, Some(nvars)).parse()?;
    Ok(build(raw, nvars))
}

/// Like [`parse_equation`], taking the variable count from the highest
/// variable index mentioned (at least one).
pub fn parse_equation_infer(s: &str) -> Result<LaurentPolynomial, ParseError> {
    let raw = Parser::new(s, None).parse()?;
    let nvars = raw
        .iter()
        .flat_map(|(_, f)| f.iter().map(|&(j, _)| j + 1))
        .max()
        .unwrap_or(1);
    Ok(build(raw, nvars))
}

type RawTerm = (f64, Vec<(usize, f64)>);

fn build(raw: Vec<RawTerm>, nvars: usize) -> LaurentPolynomial {
    let terms = raw
        .into_iter()
        .map(|(c, factors)| {
            let mut exponents = vec![0.0; nvars];
            for (j, e) in factors {
                exponents[j] += e;
            }
            LaurentTerm::new(c, exponents)
        })
        .collect();
    LaurentPolynomial { nvars, terms }.canonicalize()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nvars: Option<usize>,
}

impl<'a> Parser<'a> {
    fn new(s: &'a str, nvars: Option<usize>) -> Self {
        Self {
            src: s.as_bytes(),
            pos: 0,
            nvars,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, expected: &'static str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected,
        }
    }

    fn parse(mut self) -> Result<Vec<RawTerm>, ParseError> {
        let mut terms = Vec::new();
        if self.peek().is_none() {
            return Err(self.syntax("a term"));
        }
        terms.push(self.term(false, true)?);
        while let Some(op) = self.peek() {
            let negate = match op {
                b'+' => false,
                b'-' => true,
                _ => return Err(self.syntax("'+' or '-'")),
            };
            self.pos += 1;
            terms.push(self.term(negate, false)?);
        }
        Ok(terms)
    }

    fn term(&mut self, negate: bool, first: bool) -> Result<RawTerm, ParseError> {
        let sign = if negate { -1.0 } else { 1.0 };
        match self.peek() {
            Some(b'x') => Ok((sign, self.factors()?)),
            Some(b'-') if first && self.next_nonws_is_var() => {
                self.pos += 1;
                Ok((-sign, self.factors()?))
            }
            Some(c) if c == b'+' || c == b'-' || c == b'.' || c.is_ascii_digit() => {
                let coeff = self.number()?;
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    if self.peek() != Some(b'x') {
                        return Err(self.syntax("a variable"));
                    }
                    Ok((sign * coeff, self.factors()?))
                } else {
                    Ok((sign * coeff, Vec::new()))
                }
            }
            _ => Err(self.syntax("a term")),
        }
    }

    fn next_nonws_is_var(&self) -> bool {
        self.src[self.pos + 1..]
            .iter()
            .find(|c| !c.is_ascii_whitespace())
            == Some(&b'x')
    }

    fn factors(&mut self) -> Result<Vec<(usize, f64)>, ParseError> {
        let mut out = vec![self.factor()?];
        while self.peek() == Some(b'*') {
            self.pos += 1;
            if self.peek() != Some(b'x') {
                return Err(self.syntax("a variable"));
            }
            out.push(self.factor()?);
        }
        Ok(out)
    }

    fn factor(&mut self) -> Result<(usize, f64), ParseError> {
        self.skip_ws();
        let start = self.pos;
        // caller guarantees 'x'
        self.pos += 1;
        let digits_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let name = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        if self.pos == digits_start {
            return Err(ParseError::UnknownVariable {
                name,
                offset: start,
            });
        }
        let index: usize = match std::str::from_utf8(&self.src[digits_start..self.pos])
            .ok()
            .and_then(|d| d.parse().ok())
        {
            Some(i) if i >= 1 && self.nvars.is_none_or(|n| i <= n) => i,
            _ => {
                return Err(ParseError::UnknownVariable {
                    name,
                    offset: start,
                })
            }
        };
        let exponent = if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let at = self.pos;
            self.number()
                .map_err(|_| ParseError::BadExponent { offset: at })?
        } else {
            1.0
        };
        Ok((index - 1, exponent))
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        let mut digits = 0;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
            digits += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            self.pos = start;
            return Err(self.syntax("a number"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or(ParseError::Syntax {
                offset: start,
                expected: "a number",
            })
    }
}

/// Renders a polynomial in the grammar accepted by [`parse_equation`].
pub fn print_equation(p: &LaurentPolynomial) -> String {
    if p.terms.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, term) in p.terms.iter().enumerate() {
        let mut factors = String::new();
        for (j, &e) in term.exponents.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            if !factors.is_empty() {
                factors.push('*');
            }
            if e == 1.0 {
                let _ = write!(factors, "x{}", j + 1);
            } else {
                let _ = write!(factors, "x{}^{}", j + 1, e);
            }
        }

        let c = term.coefficient;
        let magnitude = if i == 0 {
            c
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
            c.abs()
        };
        if factors.is_empty() {
            let _ = write!(out, "{magnitude}");
        } else if magnitude == 1.0 {
            out.push_str(&factors);
        } else {
            let _ = write!(out, "{magnitude}*{factors}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn term(c: f64, e: &[f64]) -> LaurentTerm {
        LaurentTerm::new(c, e.to_vec())
    }

    #[test]
    fn parses_examples() {
        let p = parse_equation("x1^2*x2^-1", 2).unwrap();
        assert_eq!(p.terms(), &[term(1.0, &[2.0, -1.0])]);

        let q = parse_equation("0.5*x1^2 + 0.5*x2^2", 2).unwrap();
        assert_eq!(q.terms(), &[term(0.5, &[2.0, 0.0]), term(0.5, &[0.0, 2.0])]);
    }

    #[test]
    fn syntax_error_offset() {
        let err = parse_equation("x1^2 + + x2", 2).unwrap_err();
        assert_eq!(
            err,
            ParseError::Syntax {
                offset: 7,
                expected: "a number"
            }
        );
    }

    #[test]
    fn other_errors() {
        assert!(matches!(
            parse_equation("x3", 2),
            Err(ParseError::UnknownVariable { offset: 0, .. })
        ));
        assert!(matches!(
            parse_equation("2*x0", 2),
            Err(ParseError::UnknownVariable { offset: 2, .. })
        ));
        assert!(matches!(
            parse_equation("x1^y", 1),
            Err(ParseError::BadExponent { offset: 3 })
        ));
        assert!(matches!(
            parse_equation("", 1),
            Err(ParseError::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            parse_equation("1e5", 1),
            Err(ParseError::Syntax { offset: 1, .. })
        ));
        assert!(matches!(
            parse_equation("x1 *", 1),
            Err(ParseError::Syntax { offset: 4, .. })
        ));
    }

    #[test]
    fn whitespace_and_signs() {
        let p = parse_equation("  -2 * x1 -x2^ -1 + 3 ", 2).unwrap();
        assert_eq!(
            p.terms(),
            &[
                term(-2.0, &[1.0, 0.0]),
                term(3.0, &[0.0, 0.0]),
                term(-1.0, &[0.0, -1.0])
            ]
        );
        let q = parse_equation("-x1 - -2*x2", 2).unwrap();
        assert_eq!(
            q.terms(),
            &[term(-1.0, &[1.0, 0.0]), term(2.0, &[0.0, 1.0])]
        );
        // repeated variables multiply
        let r = parse_equation("x1*x1^2", 1).unwrap();
        assert_eq!(r.terms(), &[term(1.0, &[3.0])]);
    }

    #[test]
    fn infers_variable_count() {
        assert_eq!(parse_equation_infer("x1*x3").unwrap().nvars(), 3);
        assert_eq!(parse_equation_infer("4").unwrap().nvars(), 1);
    }

    #[test]
    fn prints_examples() {
        let p = LaurentPolynomial::new(2, vec![term(1.0, &[2.0, -1.0])]).unwrap();
        assert_eq!(print_equation(&p), "x1^2*x2^-1");
        assert_eq!(print_equation(&LaurentPolynomial::zero(3)), "0");
        let q = LaurentPolynomial::new(1, vec![term(-2.0, &[1.0]), term(1.0, &[0.0])]).unwrap();
        assert_eq!(print_equation(&q), "-2*x1 + 1");
        let r = LaurentPolynomial::new(2, vec![term(-1.0, &[1.0, 0.0]), term(-1.0, &[0.0, 2.342])])
            .unwrap();
        assert_eq!(print_equation(&r), "-1*x1 - x2^2.342");
        assert_eq!(
            print_equation(&LaurentPolynomial::constant(1, 1e-7)),
            "0.0000001"
        );
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(
            nvars in 1usize..4,
            raw in prop::collection::vec(
                (prop_oneof![Just(1.0), Just(-1.0), -100.0..100.0f64],
                 prop::collection::vec(prop_oneof![-3i32..=3i32, Just(7)], 3),
                 prop::bool::ANY),
                0..5),
        ) {
            let terms = raw.into_iter().map(|(c, e, frac)| {
                let mut exps: Vec<f64> = e[..nvars].iter().map(|&v| f64::from(v)).collect();
                if frac { exps[0] += 0.125; }
                LaurentTerm::new(c, exps)
            }).collect();
            let p = LaurentPolynomial::new(nvars, terms).unwrap().canonicalize();
            let s = print_equation(&p);
            prop_assert_eq!(parse_equation(&s, nvars).unwrap(), p, "{}", s);
        }
    }
}
