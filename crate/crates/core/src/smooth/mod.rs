//! One-dimensional nonparametric smoothing.
//!
//! [`local_poly`] fits kernel-weighted local polynomials (values and first
//! derivatives, including one-sided boundary limits); [`propensity`] models
//! the group-membership probabilities `e_g(x) = P(G = g | X = x)`.

pub mod local_poly;
pub mod propensity;

pub use local_poly::{
    auto_bandwidth, boundary_limit, fit_local_poly, Bandwidth, CurveFit, Kernel, LocalEstimate, LocalPolyConfig, Side,
};
pub use propensity::{eval_propensity, fit_group_propensity, PropensityModel, DEFAULT_CLAMP};
