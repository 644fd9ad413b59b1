//! Domains, grids, mean functions and Gaussian field sampling on a grid.
//!
//! The continuum field is represented by its values at the midpoints of a
//! regular grid of cells; the exponential integral is the midpoint rule over
//! the same cells.

mod domain;
mod mean;
mod sampler;

pub use domain::{Domain, Grid};
pub use mean::{
    fd_gradient, fd_hessian, ConstantMean, Covariate, FnMean, LinearCombination, MeanFunction,
    QuadraticMean,
};
pub use sampler::{
    integral_i, integral_i_on_nodes, sample_poisson_count, simulate_grf, simulate_grf_shifted,
    FieldSample, GridSampler, Provenance,
};
