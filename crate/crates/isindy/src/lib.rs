//! Sparse identification of nonlinear ODE dynamics from noisy time series.
//!
//! The pipeline estimates model structure, structural parameters, and the
//! initial condition simultaneously:
//!
//! 1. [`smoothing`] — penalized cubic B-spline smoothing per variable, with
//!    the weight chosen by generalized cross validation on a logit grid;
//! 2. [`features`] — a candidate library (monomials, sinusoids) evaluated
//!    on the smoothed states;
//! 3. [`regression`] — the integral-form discretization: cumulative
//!    trapezoid quadrature turns the ODE into a pseudo-linear regression
//!    whose intercept is the initial condition;
//! 4. [`solver`] — sequential threshold least squares prunes the feature
//!    support and re-estimates coefficients and intercept.
//!
//! [`benchmarks`] wires the stages into [`benchmarks::isindy_identify`]
//! and provides the reference systems, the seeded noise model, and the two
//! baseline methods used for comparison. [`odeint`] supplies the fixed-step
//! integrator for generating truth data and simulating identified models.

pub mod basis;
pub mod benchmarks;
pub mod exec;
pub mod features;
pub mod io;
pub mod odeint;
pub mod regression;
pub mod smoothing;
pub mod solver;
pub mod types;

pub use benchmarks::{
    add_noise, insindy_identify, isindy_identify, sindy_identify, BenchmarkSystem, NoiseSpec,
};
pub use exec::Execution;
pub use types::{ObservationSet, SparseModel, StateMatrix, TimeGrid};
