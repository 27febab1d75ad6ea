//! Safe policy learning for sharp multi-cutoff regression discontinuity designs.
//!
//! The pipeline decomposes the value of a candidate threshold policy into an
//! identified agreement term, a cross-fitted doubly-robust term for the part
//! that can be extrapolated from neighbouring groups, and a partially
//! identified term bounded by a Lipschitz-style smoothness restriction on
//! cross-group outcome differences. New cutoffs maximize the worst case of
//! that sum, so the learned policy never scores below the status quo.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: records, designs, threshold policies, utility.
//! - [`smooth`]: local polynomial regression and group-propensity models.
//! - [`estimator`]: folds, cross-fitted nuisances, DR scores, value terms.
//! - [`idbounds`]: DR-learner difference curves, smoothness parameters, bounds.
//! - [`learner`]: candidate grids, per-group worst-case search, sweeps.
//! - [`simlab`]: synthetic scenarios, true-value oracle, regret experiments.
//! - [`cli`]: configuration and the `safe-rd` command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod idbounds;
pub mod learner;
pub mod simlab;
pub mod smooth;

pub use data::{Dataset, GroupId, Record, StudyDesign, ThresholdPolicy, UtilityConfig};
pub use error::{Error, Result};
