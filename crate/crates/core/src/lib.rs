//! High-precision laboratory for the deformed Laguerre weight
//! `x^α e^{-x} ∏ (x + t_k)^{λ_k}`.
//!
//! The crate builds the monic orthogonal polynomial system of the weight, the
//! Hankel determinants `D_n`, the ladder-operator auxiliaries `R_{n,k}`, `r_{n,k}`,
//! and measures residuals of the algebraic, differential and asymptotic
//! identities they satisfy. All arithmetic runs on MPFR floats at an explicit
//! working precision.

pub mod calculus;
pub mod coulomb;
pub mod error;
pub mod ladder;
pub mod num;
pub mod orthopoly;
pub mod presets;
pub mod quadrature;
pub mod recurrences;
pub mod report;
pub mod scaling;
pub mod system;
pub mod weights;

pub use error::{Error, Result};
pub use rug::Float;
