//! Monte Carlo reference distributions and the tests built on them.
//!
//! A cloud is the set of `(H, lambda)` estimates obtained by running the
//! estimator on many series simulated under a null model. Test (i) compares
//! an observed `H` with the cloud's `H` margin two-sidedly, test (ii) compares
//! `lambda` one-sidedly and test (iii) locates the observed pair relative to
//! nested confidence ellipses fitted to the cloud.

mod cloud;
mod ellipse;
mod kurtosis;
mod power;
mod pvalue;

pub use cloud::{
    build_cloud, build_cloud_ar, build_cloud_niid, companion_spectral_radius, CloudKey, EstimateCloud, NullModel,
};
pub use ellipse::{fit_ellipse, joint_test, ConicEllipse, EllipseFamily, JOINT_GRID_STEPS};
pub use kurtosis::{kurtosis_check, KurtosisCheck};
pub use power::{size_power_cell, PowerCell, PowerConfig};
pub use pvalue::{pvalue_h, pvalue_lambda, Decision, TestReport, DEFAULT_LEVELS};

/// Replication count used by the published procedure.
pub const DEFAULT_REPS: usize = 5000;
/// Burn-in for autoregressive null simulations.
pub const AR_BURN_IN: usize = 500;
