//! Certified upper and lower bounds on determinant-IRS values of synchronous
//! non-local games, plus an exact Fuglede–Kadison determinant checker for
//! permutation representations.

pub mod algebra;
pub mod dovetail;
pub mod error;
pub mod games;
pub mod group;
pub mod hierarchy;
pub mod lnplus;
pub mod lp;
pub mod permstrat;
pub mod rational;

pub use algebra::{poly_apply, trace_functional, AlgebraElement, AlgebraMatrix, LinearFunctional, RationalPolynomial};
pub use error::{Error, Result};
pub use games::{classical_value_bruteforce, corpus, expand_projection, strategy_functional, support_set, GameSpec, StrategyTable};
pub use group::{ball, product_closure, Block, GroupParams, Word, WordSet};
pub use rational::Rat;
