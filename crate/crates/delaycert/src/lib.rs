//! Stability certification for time-delay systems.
//!
//! `delaycert` proves asymptotic stability of linear and nonlinear
//! time-delay systems by searching for Lyapunov-Krasovskii functionals
//! whose positivity and decrease conditions are compiled, through
//! sum-of-squares decompositions and positive-operator cones, into
//! semidefinite programs. Solved certificates are re-verified against an
//! independent numerical oracle that integrates the delay system and
//! samples the functional along trajectories.
//!
//! The main entry points:
//!
//! - [`stability`] assembles the certification SDP for each system class
//!   (single, multiple, and distributed delays; nonlinear right-hand
//!   sides; delay-independent functionals; plain ODEs) and extracts and
//!   verifies certificates.
//! - [`search`] drives delay-margin bisection, grid sweeps, and
//!   parameter-region certification.
//! - [`simulate`] is the independent oracle: a method-of-steps integrator
//!   plus quadrature evaluation of functionals along trajectories.
//! - [`sdp`] holds the problem container, a dense primal-dual
//!   interior-point solver, and SDPA-format export for external checks.
//! - [`poly`], [`sos`], and [`cones`] are the assembly layers: exact
//!   rational polynomial arithmetic, Gram-matrix sum-of-squares
//!   compilation, and the positive multiplier/integral-operator cones.
//!
//! Runnable demonstrations of each capability live in `examples/`; the
//! thin `delaycert` binary exposes the same flows on the command line.


pub mod cones;
pub mod poly;
pub mod quadrature;

pub mod sdp;
pub mod search;


pub mod simulate;
pub mod stability;
pub mod sos;


pub mod symbol;
