//! Fractionally integrated noise compounded with cascade trading time.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cascade::{build_cascade, CascadeParams};
use crate::error::{MmarError, Result};
use crate::series::{Lane, LogReturnSeries, Origin, SeedSpec};

/// Default truncation of the infinite moving average.
pub const DEFAULT_TRUNCATION: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmarParams {
    hurst: f64,
    lambda: f64,
    len: usize,
}

impl MmarParams {
    pub fn new(hurst: f64, lambda: f64, len: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(MmarError::InvalidParameter(format!(
                "Hurst exponent must lie in (0, 1), got {hurst}"
            )));
        }
        // Validates lambda; the length check is looser here.
        CascadeParams::new(lambda, 2)?;
        if len == 0 {
            return Err(MmarError::InvalidParameter("series length must be positive".into()));
        }
        Ok(Self { hurst, lambda, len })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Fractional differencing order `d = H - 1/2`.
    pub fn d(&self) -> f64 {
        self.hurst - 0.5
    }
}

/// Leading coefficients of `(1 - L)^(-d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaWeights {
    weights: Vec<f64>,
    d: f64,
}

impl MaWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Number of leading weights up to the last non-zero one.
    fn effective_len(&self) -> usize {
        self.weights.iter().rposition(|w| *w != 0.0).map_or(1, |i| i + 1)
    }
}

/// `psi_0 = 1`, `psi_j = psi_{j-1} (d + j - 1) / j` for `j = 1..=truncation`.
pub fn ma_weights(d: f64, truncation: usize) -> Result<MaWeights> {
    if !(d > -0.5 && d < 0.5) {
        return Err(MmarError::InvalidParameter(format!(
            "differencing order must lie in (-0.5, 0.5), got {d}"
        )));
    }
    if truncation == 0 {
        return Err(MmarError::InvalidParameter("truncation must be at least 1".into()));
    }
    let mut weights = Vec::with_capacity(truncation + 1);
    weights.push(1.0);
    for j in 1..=truncation {
        let prev = weights[j - 1];
        weights.push(prev * (d + (j - 1) as f64) / j as f64);
    }
    Ok(MaWeights { weights, d })
}

/// `u_t ~ N(0, dtheta_t)` over a cascade of length `len`.
pub fn compounded_innovations(lambda: f64, len: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    let dtheta = build_cascade(&CascadeParams::new(lambda, len)?, seed)?;
    let mut rng = seed.rng(Lane::Innovations);
    Ok(dtheta
        .values()
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v.sqrt() * z
        })
        .collect())
}

/// Standard normal draws on the innovation lane.
pub fn simulate_niid(len: usize, seed: SeedSpec) -> Result<LogReturnSeries> {
    let mut rng = seed.rng(Lane::Innovations);
    let values = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    LogReturnSeries::new(values, Origin::Simulated)
}

/// Causal filter: `out[i] = sum_j psi_j x[i + J - j]` for the last `x.len() - J` points.
pub(crate) fn apply_ma(weights: &MaWeights, x: &[f64], burn_in: usize) -> Vec<f64> {
    let taps = &weights.weights[..weights.effective_len().min(burn_in + 1)];
    (burn_in..x.len())
        .map(|t| taps.iter().enumerate().map(|(j, w)| w * x[t - j]).sum())
        .collect()
}

/// One MMAR sample path of log returns. The cascade and innovations cover
/// `len + truncation` periods and the first `truncation` are burn-in.
pub fn simulate_mmar(params: &MmarParams, seed: SeedSpec, truncation: usize) -> Result<LogReturnSeries> {
    let weights = ma_weights(params.d(), truncation)?;
    let u = compounded_innovations(params.lambda, params.len + truncation, seed)?;
    LogReturnSeries::new(apply_ma(&weights, &u, truncation), Origin::Simulated)
}

/// Sample variance of non-overlapping `n`-period returns for each scale.
pub fn variance_scaling(returns: &LogReturnSeries, scales: &[usize]) -> Result<Vec<(usize, f64)>> {
    let x = returns.values();
    let max_scale = x.len() / 10;
    scales
        .iter()
        .map(|&n| {
            if n == 0 || n > max_scale {
                return Err(MmarError::InvalidParameter(format!(
                    "scale {n} outside 1..={max_scale} for {} returns",
                    x.len()
                )));
            }
            let sums: Vec<f64> = x.chunks_exact(n).map(|c| c.iter().sum()).collect();
            let m = sums.len() as f64;
            let mean = sums.iter().sum::<f64>() / m;
            let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
            Ok((n, var))
        })
        .collect()
}

/// OLS slope of `ln var` on `ln n`; estimates `2H`.
pub fn variance_scaling_slope(table: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = table.iter().map(|&(n, v)| ((n as f64).ln(), v.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
