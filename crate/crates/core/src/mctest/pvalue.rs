use serde::{Deserialize, Serialize};

use super::cloud::EstimateCloud;
use super::ellipse::EllipseFamily;
use crate::error::Result;

pub const DEFAULT_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

/// Two-sided: `2 min(pi, 1 - pi)` with `pi` the share of cloud `H` above `h_hat`.
pub fn pvalue_h(cloud: &EstimateCloud, h_hat: f64) -> f64 {
    let above = cloud.hursts().filter(|h| *h > h_hat).count();
    let pi = above as f64 / cloud.len() as f64;
    2.0 * pi.min(1.0 - pi)
}

/// One-sided against `lambda > 1`: share of cloud `lambda` above `lambda_hat`.
pub fn pvalue_lambda(cloud: &EstimateCloud, lambda_hat: f64) -> f64 {
    let above = cloud.lambdas().filter(|l| *l > lambda_hat).count();
    above as f64 / cloud.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub level: f64,
    pub reject_h: bool,
    pub reject_lambda: bool,
    pub reject_joint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub h_hat: f64,
    pub lambda_hat: f64,
    pub p_h: f64,
    pub p_lambda: f64,
    pub p_joint: f64,
    pub decisions: Vec<Decision>,
}

impl TestReport {
    pub fn new(cloud: &EstimateCloud, h_hat: f64, lambda_hat: f64) -> Result<Self> {
        let family = EllipseFamily::fit(cloud)?;
        Ok(Self::with_family(cloud, &family, h_hat, lambda_hat))
    }

    /// Reuses a fitted ellipse family when many points are tested against one cloud.
    pub fn with_family(cloud: &EstimateCloud, family: &EllipseFamily, h_hat: f64, lambda_hat: f64) -> Self {
        let p_h = pvalue_h(cloud, h_hat);
        let p_lambda = pvalue_lambda(cloud, lambda_hat);
        let p_joint = family.joint_pvalue(h_hat, lambda_hat);
        let decisions = DEFAULT_LEVELS
            .iter()
            .map(|&level| Decision {
                level,
                reject_h: p_h < level,
                reject_lambda: p_lambda < level,
                reject_joint: p_joint < level,
            })
            .collect();
        Self {
            h_hat,
            lambda_hat,
            p_h,
            p_lambda,
            p_joint,
            decisions,
        }
    }

    pub fn decision(&self, level: f64) -> Decision {
        Decision {
            level,
            reject_h: self.p_h < level,
            reject_lambda: self.p_lambda < level,
            reject_joint: self.p_joint < level,
        }
    }
}
