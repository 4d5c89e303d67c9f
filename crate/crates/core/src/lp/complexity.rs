use serde::{Deserialize, Serialize};

use super::LaurentPolynomial;

/// Operator, constant and feature counts of an equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComplexityBreakdown {
    pub operators: u32,
    pub constants: u32,
    pub features: u32,
    pub total: u32,
}

fn is_unit(c: f64) -> bool {
    c == 1.0 || c == -1.0
}

/// Counts the expression tree of the canonical form of `p`.
///
/// Per term: one feature per variable with a nonzero exponent; a constant for
/// a non-unit coefficient (always, for a constant-only term) and for every
/// exponent outside {0, 1, -1}; multiplications joining the factors and the
/// coefficient; a power operator per exponent outside {0, 1, -1}; a division
/// per exponent equal to -1; a negation per negative coefficient. Terms are
/// joined by additions.
pub fn complexity(p: &LaurentPolynomial) -> ComplexityBreakdown {
    let p = p.canonicalize();
    let mut operators = p.terms().len().saturating_sub(1) as u32;
    let mut constants = 0u32;
    let mut features = 0u32;

    for term in p.terms() {
        let support = term.degree_support() as u32;
        features += support;

        let unit = is_unit(term.coefficient);
        if !unit || support == 0 {
            constants += 1;
        }
        if support > 0 {
            operators += support - 1 + u32::from(!unit);
        }
        if term.coefficient < 0.0 {
            operators += 1;
        }
        for &e in &term.exponents {
            if e == -1.0 {
                operators += 1;
            } else if e != 0.0 && e != 1.0 {
                operators += 1;
                constants += 1;
            }
        }
    }

    ComplexityBreakdown {
        operators,
        constants,
        features,
        total: operators + constants + features,
    }
}
