use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::EstimateCloud;
use super::ellipse::EllipseFamily;
use super::pvalue::{pvalue_h, pvalue_lambda};
use crate::error::{MmarError, Result};
use crate::longmem::{simulate_mmar, MmarParams, DEFAULT_TRUNCATION};
use crate::scaling::estimate;
use crate::series::SeedSpec;

/// One cell of a size/power table: the true `(H, lambda)` and how many
/// series to draw there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub hurst: f64,
    pub lambda: f64,
    pub len: usize,
    pub reps_outer: usize,
    pub master_seed: u64,
    pub levels: Vec<f64>,
    pub truncation: usize,
}

impl PowerConfig {
    pub fn new(hurst: f64, lambda: f64, len: usize, reps_outer: usize, master_seed: u64) -> Self {
        Self {
            hurst,
            lambda,
            len,
            reps_outer,
            master_seed,
            levels: super::DEFAULT_LEVELS.to_vec(),
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

/// Rejection frequencies, one per level, for tests (i), (ii) and (iii).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub config: PowerConfig,
    pub rates_h: Vec<f64>,
    pub rates_lambda: Vec<f64>,
    pub rates_joint: Vec<f64>,
    /// Replications whose estimate failed; excluded from the rates.
    pub failed: usize,
}

impl PowerCell {
    pub fn rate(&self, test: usize, level: f64) -> Option<f64> {
        let i = self.config.levels.iter().position(|l| (l - level).abs() < 1e-12)?;
        match test {
            1 => Some(self.rates_h[i]),
            2 => Some(self.rates_lambda[i]),
            3 => Some(self.rates_joint[i]),
            _ => None,
        }
    }
}

pub fn size_power_cell(config: &PowerConfig, cloud: &EstimateCloud) -> Result<PowerCell> {
    if cloud.key.len != config.len {
        return Err(MmarError::InvalidParameter(format!(
            "cloud built at T = {} but the cell simulates T = {}",
            cloud.key.len, config.len
        )));
    }
    if config.reps_outer == 0 {
        return Err(MmarError::InvalidParameter("reps_outer must be positive".into()));
    }
    let params = MmarParams::new(config.hurst, config.lambda, config.len)?;
    let family = EllipseFamily::fit(cloud)?;
    let grids = &cloud.key.grids;

    let outcomes: Vec<Option<(f64, f64, f64)>> = (1..=config.reps_outer as u64)
        .into_par_iter()
        .map(|r| {
            let x = simulate_mmar(&params, SeedSpec::new(config.master_seed, r), config.truncation).ok()?;
            let e = estimate(&x, grids).ok()?;
            let (h, l) = (e.hurst(), e.lambda());
            Some((pvalue_h(cloud, h), pvalue_lambda(cloud, l), family.joint_pvalue(h, l)))
        })
        .collect();
    let pvalues: Vec<(f64, f64, f64)> = outcomes.iter().flatten().copied().collect();
    let failed = outcomes.len() - pvalues.len();
    if pvalues.is_empty() {
        return Err(MmarError::Degenerate("every replication failed to estimate".into()));
    }
    let n = pvalues.len() as f64;
    let rate = |select: fn(&(f64, f64, f64)) -> f64, level: f64| {
        pvalues.iter().filter(|p| select(p) < level).count() as f64 / n
    };
    let rates = |select: fn(&(f64, f64, f64)) -> f64| -> Vec<f64> {
        config.levels.iter().map(|&level| rate(select, level)).collect()
    };
    Ok(PowerCell {
        config: config.clone(),
        rates_h: rates(|p| p.0),
        rates_lambda: rates(|p| p.1),
        rates_joint: rates(|p| p.2),
        failed,
    })
}
