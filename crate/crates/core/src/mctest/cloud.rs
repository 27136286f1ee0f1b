use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AR_BURN_IN;
use crate::error::{MmarError, Result};
use crate::longmem::simulate_niid;
use crate::prefilter::simulate_ar;
use crate::scaling::{estimate_slice, Grids};
use crate::series::{Lane, SeedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NullModel {
    Niid,
    /// `(lag, rho)` pairs.
    Ar {
        coefficients: Vec<(usize, f64)>,
    },
}

/// Everything that determines a cloud bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudKey {
    pub null_model: NullModel,
    pub len: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub grids: Grids,
}

impl CloudKey {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("cloud key serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Simulated `(H, lambda)` estimates under a null model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCloud {
    pub key: CloudKey,
    /// `(H, lambda)` in replication order, failed replications removed.
    pub points: Vec<(f64, f64)>,
    /// Stream indices of replications whose estimate failed.
    pub excluded: Vec<u64>,
}

impl EstimateCloud {
    pub fn from_points(key: CloudKey, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(MmarError::InvalidParameter("empty cloud".into()));
        }
        if points.iter().any(|(h, l)| !h.is_finite() || !l.is_finite()) {
            return Err(MmarError::InvalidParameter("cloud contains non-finite points".into()));
        }
        Ok(Self {
            key,
            points,
            excluded: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hursts(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn lambdas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        (self.hursts().sum::<f64>() / n, self.lambdas().sum::<f64>() / n)
    }
}

/// Largest eigenvalue modulus of the AR companion matrix.
pub fn companion_spectral_radius(coefficients: &[(usize, f64)]) -> f64 {
    let order = coefficients.iter().map(|c| c.0).max().unwrap_or(0);
    if order == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::zeros(order, order);
    for &(lag, rho) in coefficients {
        companion[(0, lag - 1)] = rho;
    }
    for i in 1..order {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn simulate_null(model: &NullModel, len: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    match model {
        NullModel::Niid => Ok(simulate_niid(len, seed)?.into_values()),
        NullModel::Ar { coefficients } if coefficients.is_empty() => Ok(simulate_niid(len, seed)?.into_values()),
        NullModel::Ar { coefficients } => {
            let mut rng = seed.rng(Lane::Innovations);
            let u = std::iter::repeat_with(move || rng.sample::<f64, _>(StandardNormal));
            Ok(simulate_ar(coefficients, len, AR_BURN_IN, u))
        }
    }
}

/// Builds the cloud for an arbitrary key; replication `r` uses stream `r` (1-based).
pub fn build_cloud(key: CloudKey) -> Result<EstimateCloud> {
    if key.reps < 100 {
        return Err(MmarError::InvalidParameter(format!(
            "at least 100 replications required, got {}",
            key.reps
        )));
    }
    if key.reps < 1000 {
        warn!("only {} replications; tail p-values will be coarse", key.reps);
    }
    if let NullModel::Ar { coefficients } = &key.null_model {
        if coefficients.iter().any(|(lag, rho)| *lag == 0 || !rho.is_finite()) {
            return Err(MmarError::InvalidParameter(
                "AR lags must be >= 1 with finite coefficients".into(),
            ));
        }
        let radius = companion_spectral_radius(coefficients);
        if radius >= 1.0 {
            return Err(MmarError::Explosive(radius));
        }
    }
    let outcomes: Vec<Result<(f64, f64)>> = (1..=key.reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = simulate_null(&key.null_model, key.len, SeedSpec::new(key.master_seed, r))?;
            let e = estimate_slice(&x, &key.grids)?;
            Ok((e.hurst(), e.lambda()))
        })
        .collect();

    let mut points = Vec::with_capacity(key.reps);
    let mut excluded = Vec::new();
    for (r, outcome) in (1..).zip(outcomes) {
        match outcome {
            Ok(p) => points.push(p),
            Err(MmarError::NoRealRoot { .. }) | Err(MmarError::Degenerate(_)) => excluded.push(r),
            Err(e) => return Err(e),
        }
    }
    if excluded.len() * 100 > key.reps {
        return Err(MmarError::TooManyFailures {
            excluded: excluded.len(),
            reps: key.reps,
        });
    }
    if !excluded.is_empty() {
        warn!("{} of {} replications excluded", excluded.len(), key.reps);
    }
    Ok(EstimateCloud { key, points, excluded })
}

pub fn build_cloud_niid(len: usize, reps: usize, master_seed: u64, grids: &Grids) -> Result<EstimateCloud> {
    build_cloud(CloudKey {
        null_model: NullModel::Niid,
        len,
        reps,
        master_seed,
        grids: grids.clone(),
    })
}

pub fn build_cloud_ar(
    coefficients: &[(usize, f64)],
    len: usize,
    reps: usize,
    master_seed: u64,
    grids: &Grids,
) -> Result<EstimateCloud> {
    build_cloud(CloudKey {
        null_model: NullModel::Ar {
            coefficients: coefficients.to_vec(),
        },
        len,
        reps,
        master_seed,
        grids: grids.clone(),
    })
}
