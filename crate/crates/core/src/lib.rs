//! Delay-coordinate embeddings of smooth dynamical systems.
//!
//! The crate builds the `k`-delay map `x ↦ (h(x), h(Tx), …, h(T^{k-1}x))` for
//! explicitly parametrized compact manifolds and polynomially perturbed
//! observables `h_α = h + Σ α_j h_j`, and provides the numerical diagnostics
//! that go with it:
//!
//! * [`geometry`] and [`dynamics`]: test manifolds (circle, flat 2-torus) and
//!   diffeomorphisms on them with analytic chart derivatives.
//! * [`observables`]: monomial bases, perturbed observables and gradient
//!   interpolation by polynomials.
//! * [`embedding`]: the delay map, its differential, the pair matrix
//!   `D_{x,y}` and random orthogonal projections.
//! * [`sampling`]: reference measures, Cantor test sets, box counting and an
//!   exact fixed-radius spatial index.
//! * [`regularity`]: pointwise bi-Lipschitz constants, immersion and
//!   self-intersection scans, and the singular-value measure bound.
//! * [`prediction`]: empirical prediction maps and prediction-error curves.
//! * [`lyapunov`]: direct and observed Lyapunov exponents.

pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod lyapunov;
pub mod observables;
pub mod prediction;
pub mod regularity;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};

/// Column vector of reals.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Relative singular-value threshold shared by every rank decision.
pub const RANK_RTOL: f64 = 1e-10;
