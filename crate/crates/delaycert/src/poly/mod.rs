//! Exact multivariate polynomial arithmetic.
//!
//! This layer supplies the coefficient-level linear maps (differentiation,
//! definite integration with possibly symbolic bounds, boundary evaluation,
//! affine substitution) from which every equality constraint of the
//! certification SDPs is assembled. Everything here is exact over the
//! rationals; values are immutable after construction and freely shareable
//! across threads.

pub mod basis;
pub mod monomial;
#[allow(clippy::module_inception)]
pub mod poly;
pub mod matrix;

pub use basis::{binomial, MonomialBasis};
pub use matrix::{PiecewisePolyMatrix, PolyMatrix};
pub use monomial::Monomial;
pub use poly::{rat, rat_from_f64, rat_from_int, rat_to_f64, Poly, Rat};
