//! Tail probabilities of exponential integrals of smooth Gaussian random fields.
//!
//! For a centered, unit-variance homogeneous Gaussian field `f` on a box `T`, a
//! smooth mean `μ` and a scale `σ > 0`, the crate computes
//!
//! ```text
//! P( ∫_T exp(μ(t) + σ f(t)) dt > b )      and      P( N(T) > b )
//! ```
//!
//! where `N` is the log-Gaussian Cox process with that random intensity. Two
//! families of tools are provided:
//!
//! * closed-form asymptotics as `b → ∞` ([`tail_approx`]), built on the spectral
//!   moments of the covariance ([`covariance`]);
//! * grid-level Monte Carlo ground truth ([`mc_estimators`]): crude sampling, a
//!   change-of-measure importance sampler with an exact discrete likelihood
//!   ratio, and a two-layer Poisson count estimator.
//!
//! The [`experiments`] module wires these into a JSON-configured runner used by
//! the `grftail` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accum;
pub mod covariance;
pub mod error;
pub mod experiments;
pub mod field_sim;
pub mod mc_estimators;
pub mod rng;
pub mod tail_approx;

pub use covariance::{
    check_conditions, isotropize, spectral_moments, spectral_moments_fd, CovarianceKernel,
    GaussianAniso, SpectralMoments, SquaredExponential,
};
pub use error::{Error, Result};
pub use field_sim::{Domain, FieldSample, Grid, GridSampler, MeanFunction};
pub use mc_estimators::{count_tail_mc, crude_mc, importance_sampling, merge, EstimatorResult};
pub use tail_approx::{
    h_constant, rho_diagnostic, solve_u, tail_count_approx, tail_integral_approx,
    tail_laplace_approx, ApproxResult, TailQuery,
};
