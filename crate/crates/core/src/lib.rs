//! A Monte Carlo laboratory for the stochastic heat equation
//!
//! ```text
//! ∂u/∂t = ½Δu + σ(u) η,   u(0, ·) ≡ 1,
//! ```
//!
//! driven by a centered Gaussian noise that is white in time and spatially
//! homogeneous with a finite covariance measure `f`. The crate solves the
//! equation on a periodic lattice, forms spatial averages of observables, and
//! runs statistical campaigns (normality, variance limits, convergence rates,
//! Malliavin-derivative properties, association) against closed-form and
//! semi-analytic oracles.
//!
//! Module map:
//!
//! * [`kernel`]: heat-kernel analytics and the periodic heat semigroup.
//! * [`noise`]: covariance models, spectral densities, `Υ`/`Λ`, lattice noise.
//! * [`solver`]: exponential-Euler time stepping and the moment oracles.
//! * [`malliavin`]: the coupled derivative SPDE and the explicit constants.
//! * [`observables`]: `g`, spatial averages, `B_N`/`B` estimators, lower bounds.
//! * [`stats`]: normality tests, TV proxy, rate fits, FCLT/Hölder/association.
//! * [`harness`]: configuration, seeding, campaigns and persistence.

pub mod error;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod malliavin;
pub mod noise;
pub mod observables;
pub mod quad;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{HeatSymbol, LatticeGrid};
pub use noise::{NoiseKind, NoiseModel};
pub use observables::ObservableSpec;
pub use solver::{DiffusionSpec, FieldFrame, Trajectory};
