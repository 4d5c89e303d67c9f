//! Laurent-polynomial equation discovery with growing power-term networks.
//!
//! The network's blocks each compute a product of powers of the inputs, so
//! a trained network reads directly as an equation
//! `sum_i c_i * prod_j x_j^{p_ij}`. Training grows the network one block at
//! a time, rounds weights to a fixed precision and picks among several
//! instances by a complexity-penalized validation error. Fitted equations
//! with non-integer exponents are routed to an external solver.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod lp;
pub mod network;
pub mod seed;
pub mod trainer;

pub use data::{Dataset, SamplingSpec};
pub use ensemble::{classify_lp, run_ensemble, LpVerdict, SecondaryAdapter};
pub use error::{Error, Result};
pub use lp::{
    complexity, equals_exact, parse_equation, search_space, ComplexityBreakdown, LaurentPolynomial,
    LaurentTerm,
};
pub use network::NetworkParams;
pub use trainer::{fit, train_instance, EquationCandidate, FitReport, TrainConfig};
