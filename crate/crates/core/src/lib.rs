//! Spectral-Galerkin simulation of slow-fast stochastic reaction-diffusion
//! systems on an interval, together with the statistical machinery needed to
//! build the averaged equation and to measure how far the slow component is
//! from it.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! features. The `parallel` feature distributes Monte Carlo replicas over a
//! rayon pool; results do not depend on the number of worker threads.
//!
//! Module map:
//!
//! * [`spectral`]: sine eigenbasis, grid transforms, semigroup, series checks.
//! * [`model`]: pointwise coefficients, the built-in catalog, Lipschitz and
//!   contraction checks.
//! * [`integrator`]: exponential-Euler stepping of the coupled, frozen-fast
//!   and averaged equations.
//! * [`ergodics`]: time averages of the frozen fast process and the averaged
//!   coefficients built from them.
//! * [`khasminskii`]: time partition, auxiliary fast process, remainder and
//!   Kolmogorov-operator gap.
//! * [`experiments`]: replica studies (strong and weak convergence, a priori
//!   bounds, Hölder increments).
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod ergodics;
pub mod experiments;
pub mod integrator;
pub mod khasminskii;
pub mod linalg;
pub mod model;
mod parallel;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use spectral::{FieldCoeffs, GridField, SpectralBasis};
