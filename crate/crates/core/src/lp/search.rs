use num_bigint::BigUint;

use crate::error::{Error, Result};

/// Above this many candidate terms, `2^T` is not materialized.
const MAX_TERM_COUNT: u64 = 1 << 24;

/// Size of the structure search space for polynomials of a given order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpaceResult {
    pub order: u32,
    pub nvars: u32,
    /// Monomials of total degree at most `order`: `C(order + nvars, order)`.
    pub term_count: BigUint,
    /// Distinct subsets of those monomials: `2^term_count`.
    pub structure_count: BigUint,
}

fn binomial(n: u32, k: u32) -> BigUint {
    let k = k.min(n - k);
    // exact at every step: the running product of i consecutive integers
    // divided by i! is itself a binomial coefficient
    (1..=k).fold(BigUint::from(1u32), |acc, i| acc * (n - k + i) / i)
}

pub fn search_space(order: u32, nvars: u32) -> Result<SearchSpaceResult> {
    let term_count = binomial(order + nvars, order);
    let bits = u64::try_from(&term_count)
        .ok()
        .filter(|&t| t <= MAX_TERM_COUNT)
        .ok_or_else(|| Error::SearchSpaceTooLarge(term_count.to_string()))?;
    let structure_count = BigUint::from(1u32) << bits;
    Ok(SearchSpaceResult {
        order,
        nvars,
        term_count,
        structure_count,
    })
}
