//! Dense linear algebra, special functions and seeded random numbers.
//!
//! Everything here is pure and deterministic: identical inputs give
//! bit-identical outputs.

mod cholesky;
mod matrix;
mod rng;
mod special;

pub use cholesky::{pd_factorize, pd_solve, Cholesky};
pub use matrix::{dot, Matrix};
pub use rng::SeededRng;
pub use special::{digamma, lgamma};
pub(crate) use special::digamma_unchecked;

/// `log(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
