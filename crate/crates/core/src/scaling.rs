//! Partition-function scaling estimator of the Hurst exponent and the
//! cascade parameter.
//!
//! For each moment order `q` and scale `n` the absolute `n`-period changes of
//! log price are collected over contiguous blocks (two passes when `n` does
//! not divide the sample, one anchored at each end), and
//! `S_q(n) = 1/2 * sum v^q`. The fixed-effects regression
//!
//! ```text
//! ln S_q(n) + ln n = a(q) + tau1 * q ln n + tau2 * q^2 ln n
//! ```
//!
//! gives the quadratic scaling function `tau(q) = -1 + tau1 q + tau2 q^2`,
//! from which `H = 1/q*` (the root of `tau`) and `lambda = tau1 / H`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{MmarError, Result};
use crate::series::{cumulate_slice, LogReturnSeries};

/// `|tau2|` below this is treated as the unifractal limit.
pub const TAU2_EPSILON: f64 = 1e-10;
/// Zero increments are floored at this fraction of the smallest non-zero |return|.
pub const ZERO_FLOOR_FRACTION: f64 = 1e-3;
/// Below this many returns estimates are unreliable.
pub const MIN_RECOMMENDED_LEN: usize = 500;

/// Moment orders and block sizes used to build the partition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub qs: Vec<f64>,
    pub ns: Vec<usize>,
}

impl Grids {
    pub fn new(mut qs: Vec<f64>, mut ns: Vec<usize>) -> Result<Self> {
        qs.sort_by(f64::total_cmp);
        qs.dedup();
        ns.sort_unstable();
        ns.dedup();
        if qs.iter().any(|q| !(*q > 0.0) || !q.is_finite()) {
            return Err(MmarError::InvalidParameter(
                "moment orders must be positive and finite".into(),
            ));
        }
        if ns.first() == Some(&0) {
            return Err(MmarError::InvalidParameter("scales must be at least 1".into()));
        }
        if qs.len() < 2 {
            return Err(MmarError::InvalidParameter(format!(
                "need at least 2 distinct moment orders, got {}",
                qs.len()
            )));
        }
        if ns.len() < 3 {
            return Err(MmarError::InvalidParameter(format!(
                "need at least 3 distinct scales, got {}",
                ns.len()
            )));
        }
        Ok(Self { qs, ns })
    }

    /// `q = 0.5, 1.0, ..., 4.0` and about 15 log-spaced scales in `[3, T/10]`.
    pub fn for_length(len: usize) -> Result<Self> {
        Self::new(default_moments(), default_scales(len))
    }
}

/// Moments `q = 0.5, 1.0, ..., 4.0`. Higher moments are dominated by a
/// handful of extreme increments and inflate the size of the Hurst test.
pub fn default_moments() -> Vec<f64> {
    (1..=8).map(|i| i as f64 * 0.5).collect()
}

/// Fifteen log-spaced block sizes over `[3, T/10]`, rounded and de-duplicated.
pub fn default_scales(len: usize) -> Vec<usize> {
    const COUNT: usize = 15;
    let lo = 3.0f64;
    let hi = (len as f64 / 10.0).max(lo);
    let mut ns: Vec<usize> = (0..COUNT)
        .map(|i| {
            let frac = i as f64 / (COUNT - 1) as f64;
            (lo.ln() + frac * (hi.ln() - lo.ln())).exp().round() as usize
        })
        .collect();
    ns.dedup();
    ns
}

/// Absolute `n`-period changes of `logprices` (length `T + 1`): the forward
/// pass over `M = floor(T/n)` blocks followed by the pass that starts after
/// the `L = T - nM` leftover observations. When `L = 0` the passes coincide.
pub fn block_increments(logprices: &[f64], n: usize) -> Vec<f64> {
    let t = logprices.len() - 1;
    let m = t / n;
    let leftover = t - n * m;
    let pass = |start: usize| (1..=m).map(move |k| (logprices[start + k * n] - logprices[start + (k - 1) * n]).abs());
    pass(0).chain(pass(leftover)).collect()
}

fn smallest_nonzero_change(logprices: &[f64]) -> Option<f64> {
    logprices
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|d| *d > 0.0)
        .min_by(f64::total_cmp)
}

fn check_partition_args(len: usize, n: usize) -> Result<()> {
    if len < 3 {
        return Err(MmarError::TooShort { needed: 3, got: len });
    }
    let t = len - 1;
    if n == 0 || n > t / 2 {
        return Err(MmarError::InvalidParameter(format!(
            "scale {n} outside 1..={} for {t} returns",
            t / 2
        )));
    }
    Ok(())
}

/// `S_q(T, n)` for a single `(q, n)`. Zero increments are floored as in
/// [`PartitionTable::compute`].
pub fn partition_function(logprices: &[f64], n: usize, q: f64) -> Result<f64> {
    check_partition_args(logprices.len(), n)?;
    if !(q > 0.0) || !q.is_finite() {
        return Err(MmarError::InvalidParameter(format!(
            "moment order must be positive, got {q}"
        )));
    }
    let floor = increment_floor(logprices)?;
    let v: Vec<f64> = block_increments(logprices, n)
        .into_iter()
        .map(|x| if x > 0.0 { x } else { floor })
        .collect();
    Ok(partition_sum(&v, q))
}

fn increment_floor(logprices: &[f64]) -> Result<f64> {
    smallest_nonzero_change(logprices)
        .map(|d| d * ZERO_FLOOR_FRACTION)
        .ok_or_else(|| MmarError::Degenerate("every return is zero".into()))
}

pub(crate) fn partition_sum(v: &[f64], q: f64) -> f64 {
    0.5 * v.iter().map(|x| x.powf(q)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub q: f64,
    pub n: usize,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    entries: Vec<PartitionEntry>,
    len: usize,
    floored: usize,
}

impl PartitionTable {
    /// Every `(q, n)` over `logprices` (which has one more element than the
    /// number of returns).
    pub fn compute(logprices: &[f64], grids: &Grids) -> Result<Self> {
        for &n in &grids.ns {
            check_partition_args(logprices.len(), n)?;
        }
        let floor = increment_floor(logprices)?;
        let mut floored = 0;
        let mut entries = Vec::with_capacity(grids.qs.len() * grids.ns.len());
        let mut log_v = Vec::new();
        for &n in &grids.ns {
            log_v.clear();
            log_v.extend(block_increments(logprices, n).into_iter().map(|x| {
                if x > 0.0 {
                    x.ln()
                } else {
                    floored += 1;
                    floor.ln()
                }
            }));
            for &q in &grids.qs {
                let s = 0.5 * log_v.iter().map(|lv| (q * lv).exp()).sum::<f64>();
                entries.push(PartitionEntry { q, n, s });
            }
        }
        Self::from_entries(entries, logprices.len() - 1).map(|mut table| {
            table.floored = floored;
            table
        })
    }

    pub fn from_entries(entries: Vec<PartitionEntry>, len: usize) -> Result<Self> {
        for e in &entries {
            if !(e.s > 0.0) || !e.s.is_finite() {
                return Err(MmarError::Degenerate(format!(
                    "partition value {} at q = {}, n = {} is not positive and finite",
                    e.s, e.q, e.n
                )));
            }
            if !(e.q > 0.0) || e.n == 0 {
                return Err(MmarError::InvalidParameter(format!("bad key q = {}, n = {}", e.q, e.n)));
            }
        }
        Ok(Self {
            entries,
            len,
            floored: 0,
        })
    }

    pub fn entries(&self) -> &[PartitionEntry] {
        &self.entries
    }

    /// Number of returns the table was computed from.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zero increments that were replaced by the floor.
    pub fn floored(&self) -> usize {
        self.floored
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub tau1: f64,
    pub tau2: f64,
    /// `(q, a(q))` in increasing `q`.
    pub intercepts: Vec<(f64, f64)>,
    pub rss: f64,
}

impl ScalingFit {
    /// `tau(q) = -1 + tau1 q + tau2 q^2`.
    pub fn tau(&self, q: f64) -> f64 {
        -1.0 + self.tau1 * q + self.tau2 * q * q
    }

    pub fn spectrum(&self) -> Result<SpectrumSummary> {
        spectrum_from_tau(self.tau1, self.tau2)
    }
}

/// Fixed-effects OLS of `ln S + ln n` on per-`q` dummies, `q ln n` and `q^2 ln n`.
///
/// Solved by sweeping out the `q` effects (within transformation) and
/// solving the remaining 2x2 system; this is algebraically the full OLS.
/// Rows are put in canonical `(q, n)` order first so the result does not
/// depend on table order.
pub fn scaling_regression(table: &PartitionTable) -> Result<ScalingFit> {
    let mut rows: Vec<(f64, f64, f64)> = table
        .entries()
        .iter()
        .map(|e| {
            let ln_n = (e.n as f64).ln();
            (e.q, ln_n, e.s.ln() + ln_n)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // Contiguous groups of equal q.
    let mut groups: Vec<&[(f64, f64, f64)]> = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].0 != rows[start].0 {
            groups.push(&rows[start..i]);
            start = i;
        }
    }
    let distinct_n = {
        let mut ns: Vec<f64> = rows.iter().map(|r| r.1).collect();
        ns.sort_by(f64::total_cmp);
        ns.dedup();
        ns.len()
    };
    if groups.len() < 2 || distinct_n < 3 {
        return Err(MmarError::RankDeficient(format!(
            "{} distinct moment orders and {distinct_n} distinct scales (need 2 and 3)",
            groups.len()
        )));
    }

    let group_means: Vec<(f64, f64, f64)> = groups
        .iter()
        .map(|g| {
            let k = g.len() as f64;
            let ln_n = g.iter().map(|r| r.1).sum::<f64>() / k;
            let y = g.iter().map(|r| r.2).sum::<f64>() / k;
            (g[0].0, ln_n, y)
        })
        .collect();

    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (g, &(q, ln_bar, y_bar)) in groups.iter().zip(&group_means) {
        for r in g.iter() {
            let x1 = q * (r.1 - ln_bar);
            let x2 = q * x1;
            let y = r.2 - y_bar;
            s11 += x1 * x1;
            s12 += x1 * x2;
            s22 += x2 * x2;
            s1y += x1 * y;
            s2y += x2 * y;
        }
    }
    let det = s11 * s22 - s12 * s12;
    if !(det > 1e-12 * s11 * s22) {
        return Err(MmarError::RankDeficient(format!(
            "singular slope block (det = {det:e})"
        )));
    }
    let tau1 = (s22 * s1y - s12 * s2y) / det;
    let tau2 = (s11 * s2y - s12 * s1y) / det;

    let intercepts: Vec<(f64, f64)> = group_means
        .iter()
        .map(|&(q, ln_bar, y_bar)| (q, y_bar - (tau1 * q + tau2 * q * q) * ln_bar))
        .collect();
    let rss = groups
        .iter()
        .zip(&intercepts)
        .flat_map(|(g, &(q, a))| {
            g.iter()
                .map(move |r| (r.2 - a - (tau1 * q + tau2 * q * q) * r.1).powi(2))
        })
        .sum();
    if !tau1.is_finite() || !tau2.is_finite() {
        return Err(MmarError::Degenerate("non-finite scaling coefficients".into()));
    }
    Ok(ScalingFit {
        tau1,
        tau2,
        intercepts,
        rss,
    })
}

/// Geometry of the multifractal spectrum implied by a quadratic `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub hurst: f64,
    pub lambda: f64,
    pub q_star: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl SpectrumSummary {
    /// `f(alpha) = min_q [alpha q - tau(q)]`; `-inf` off the spike when `tau2 >= 0`.
    pub fn f(&self, alpha: f64) -> f64 {
        legendre(self.tau1, self.tau2, alpha)
    }
}

fn legendre(tau1: f64, tau2: f64, alpha: f64) -> f64 {
    if tau2 < 0.0 {
        1.0 + (alpha - tau1).powi(2) / (4.0 * tau2)
    } else if alpha == tau1 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

pub fn spectrum_from_tau(tau1: f64, tau2: f64) -> Result<SpectrumSummary> {
    if !tau1.is_finite() || !tau2.is_finite() {
        return Err(MmarError::Degenerate(format!("non-finite tau ({tau1}, {tau2})")));
    }
    let discriminant = tau1 * tau1 + 4.0 * tau2;
    if !(tau1 > 0.0) || !(discriminant > 0.0) {
        return Err(MmarError::NoRealRoot {
            tau1,
            tau2,
            discriminant,
        });
    }
    // 2 tau2 / (sqrt(disc) - tau1) rationalized; free of cancellation as tau2 -> 0.
    let hurst = if tau2.abs() < TAU2_EPSILON {
        tau1
    } else {
        0.5 * (discriminant.sqrt() + tau1)
    };
    let q_star = 1.0 / hurst;
    let (alpha_min, alpha_max) = if tau2 < 0.0 {
        let half_width = 2.0 * (-tau2).sqrt();
        (tau1 - half_width, tau1 + half_width)
    } else {
        (tau1, tau1)
    };
    Ok(SpectrumSummary {
        alpha0: tau1,
        alpha1: tau1 + 2.0 * tau2 * q_star,
        alpha_min,
        alpha_max,
        hurst,
        lambda: tau1 / hurst,
        q_star,
        tau1,
        tau2,
    })
}

/// `(alpha, f(alpha))` on the supplied grid, or the single spike point
/// `(tau1, 1)` when `tau2 >= 0`.
pub fn spectrum_curve(fit: &ScalingFit, alphas: &[f64]) -> Vec<(f64, f64)> {
    if fit.tau2 >= 0.0 {
        return vec![(fit.tau1, 1.0)];
    }
    alphas.iter().map(|&a| (a, legendre(fit.tau1, fit.tau2, a))).collect()
}

/// Point estimate with the regression it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MmarEstimate {
    pub fit: ScalingFit,
    pub spectrum: SpectrumSummary,
    pub floored: usize,
    pub warnings: Vec<String>,
}

impl MmarEstimate {
    pub fn hurst(&self) -> f64 {
        self.spectrum.hurst
    }

    pub fn lambda(&self) -> f64 {
        self.spectrum.lambda
    }
}

pub fn estimate(returns: &LogReturnSeries, grids: &Grids) -> Result<MmarEstimate> {
    estimate_slice(returns.values(), grids)
}

pub(crate) fn estimate_slice(returns: &[f64], grids: &Grids) -> Result<MmarEstimate> {
    let mut warnings = Vec::new();
    if returns.len() < MIN_RECOMMENDED_LEN {
        warnings.push(format!(
            "only {} returns; at least {MIN_RECOMMENDED_LEN} recommended",
            returns.len()
        ));
    }
    let first = returns[0];
    if returns.iter().all(|r| *r == first) {
        return Err(MmarError::Degenerate(
            "constant returns give a ballistic path with H = 1".into(),
        ));
    }
    let logprices = cumulate_slice(returns, 0.0);
    let table = PartitionTable::compute(&logprices, grids)?;
    if table.floored() > 0 {
        warnings.push(format!("{} zero increments floored", table.floored()));
    }
    let fit = scaling_regression(&table)?;
    let spectrum = fit.spectrum()?;
    if !(spectrum.hurst > 0.0 && spectrum.hurst < 1.0) {
        return Err(MmarError::Degenerate(format!(
            "estimated H = {} outside (0, 1)",
            spectrum.hurst
        )));
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(MmarEstimate {
        fit,
        spectrum,
        floored: table.floored(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Origin;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn exact_table(tau1: f64, tau2: f64, qs: &[f64], ns: &[usize]) -> PartitionTable {
        let mut entries = Vec::new();
        for &q in qs {
            let a = 0.3 * q - 0.1 * q * q + 2.0;
            for &n in ns {
                let ln_s = a + (-1.0 + tau1 * q + tau2 * q * q) * (n as f64).ln();
                entries.push(PartitionEntry { q, n, s: ln_s.exp() });
            }
        }
        PartitionTable::from_entries(entries, 10_000).unwrap()
    }

    /// Materializes both passes by explicit index arithmetic.
    fn brute_force_partition(p: &[f64], n: usize, q: f64) -> f64 {
        let t = p.len() - 1;
        let mut m = 0;
        while (m + 1) * n <= t {
            m += 1;
        }
        let l = t - m * n;
        let mut v = Vec::new();
        for k in 1..=m {
            v.push((p[k * n] - p[(k - 1) * n]).abs());
        }
        for k in 1..=m {
            v.push((p[l + k * n] - p[l + (k - 1) * n]).abs());
        }
        v.iter().map(|x| x.powf(q)).sum::<f64>() / 2.0
    }

    #[test]
    fn constant_increments() {
        let p: Vec<f64> = (0..=12).map(|t| t as f64).collect();
        assert_eq!(partition_function(&p, 3, 2.0).unwrap(), 36.0);
    }

    #[test]
    fn second_pass_uses_leftover_offset() {
        let p: Vec<f64> = [0.0, 0.3, -0.2, 0.9, 1.4, 0.8, 0.1, 0.5, 1.7, 1.1, 2.3].to_vec();
        let v = block_increments(&p, 3);
        let expected = [
            (p[3] - p[0]).abs(),
            (p[6] - p[3]).abs(),
            (p[9] - p[6]).abs(),
            (p[4] - p[1]).abs(),
            (p[7] - p[4]).abs(),
            (p[10] - p[7]).abs(),
        ];
        assert_eq!(v, expected);
        for q in [0.5, 1.0, 2.5] {
            let got = partition_function(&p, 3, q).unwrap();
            assert!((got - brute_force_partition(&p, 3, q)).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroth_moment_counts_blocks() {
        let p: Vec<f64> = [0.0, 0.3, -0.2, 0.9, 1.4, 0.8, 0.1, 0.5, 1.7, 1.1, 2.3].to_vec();
        for n in 1..=5 {
            let m = 10 / n;
            assert_eq!(partition_sum(&block_increments(&p, n), 0.0), m as f64);
        }
    }

    #[test]
    fn exact_division_makes_passes_identical() {
        let p: Vec<f64> = (0..=24).map(|t| ((t * 7) % 5) as f64 * 0.1 + t as f64 * 0.01).collect();
        let v = block_increments(&p, 4);
        let (a, b) = v.split_at(v.len() / 2);
        assert_eq!(a, b);
        let single: f64 = a.iter().map(|x| x.powf(1.5)).sum();
        assert!((partition_sum(&v, 1.5) - single).abs() < 1e-15 * single.max(1.0));
    }

    #[test]
    fn zero_increments_are_floored_and_counted() {
        // Price returns to its starting level after every 2 steps.
        let returns = [0.01, -0.01].repeat(300);
        let logprices = cumulate_slice(&returns, 0.0);
        let grids = Grids::new(vec![1.0, 2.0], vec![2, 3, 4]).unwrap();
        let table = PartitionTable::compute(&logprices, &grids).unwrap();
        assert!(table.floored() > 0);
        assert!(table.entries().iter().all(|e| e.s.is_finite() && e.s > 0.0));
    }

    #[test]
    fn partition_argument_checks() {
        let p: Vec<f64> = (0..=10).map(|t| t as f64).collect();
        assert!(partition_function(&p, 6, 1.0).is_err());
        assert!(partition_function(&p, 0, 1.0).is_err());
        assert!(partition_function(&p, 2, 0.0).is_err());
        assert!(partition_function(&[0.0; 11], 2, 1.0).is_err());
    }

    #[test]
    fn exact_table_recovers_tau() {
        let qs = default_moments();
        let ns = default_scales(5000);
        let fit = scaling_regression(&exact_table(0.56, -0.03, &qs, &ns)).unwrap();
        assert!((fit.tau1 - 0.56).abs() < 1e-10);
        assert!((fit.tau2 + 0.03).abs() < 1e-10);
        assert!(fit.rss < 1e-20);
        for (q, a) in &fit.intercepts {
            assert!((a - (0.3 * q - 0.1 * q * q + 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_dummy_variable_ols() {
        let returns = crate::longmem::simulate_niid(3000, crate::series::SeedSpec::new(3, 3)).unwrap();
        let grids = Grids::for_length(3000).unwrap();
        let table = PartitionTable::compute(&cumulate(&returns), &grids).unwrap();
        let fit = scaling_regression(&table).unwrap();

        let qs = &grids.qs;
        let rows = table.entries().len();
        let cols = qs.len() + 2;
        let mut x = DMatrix::zeros(rows, cols);
        let mut y = DVector::zeros(rows);
        for (i, e) in table.entries().iter().enumerate() {
            let ln_n = (e.n as f64).ln();
            let g = qs.iter().position(|q| *q == e.q).unwrap();
            x[(i, g)] = 1.0;
            x[(i, qs.len())] = e.q * ln_n;
            x[(i, qs.len() + 1)] = e.q * e.q * ln_n;
            y[i] = e.s.ln() + ln_n;
        }
        let beta = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((beta[qs.len()] - fit.tau1).abs() < 1e-9);
        assert!((beta[qs.len() + 1] - fit.tau2).abs() < 1e-9);
        for (g, (_, a)) in fit.intercepts.iter().enumerate() {
            assert!((beta[g] - a).abs() < 1e-8);
        }
        let resid = &y - &x * &beta;
        assert!((resid.norm_squared() - fit.rss).abs() < 1e-9 * fit.rss.max(1.0));
    }

    fn cumulate(r: &LogReturnSeries) -> Vec<f64> {
        cumulate_slice(r.values(), 0.0)
    }

    #[test]
    fn row_order_does_not_change_fit() {
        let returns = crate::longmem::simulate_niid(2000, crate::series::SeedSpec::new(4, 4)).unwrap();
        let table = PartitionTable::compute(&cumulate(&returns), &Grids::for_length(2000).unwrap()).unwrap();
        let mut shuffled = table.entries().to_vec();
        shuffled.reverse();
        shuffled.swap(3, 40);
        let a = scaling_regression(&table).unwrap();
        let b = scaling_regression(&PartitionTable::from_entries(shuffled, 2000).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_scale_is_rank_deficient() {
        let table = exact_table(0.5, 0.0, &[1.0, 2.0], &[4]);
        assert!(matches!(scaling_regression(&table), Err(MmarError::RankDeficient(_))));
        let table = exact_table(0.5, 0.0, &[1.0], &[2, 4, 8]);
        assert!(matches!(scaling_regression(&table), Err(MmarError::RankDeficient(_))));
    }

    #[test]
    fn figure_values() {
        let s = spectrum_from_tau(0.56, -0.03).unwrap();
        assert!((s.alpha0 - 0.56).abs() < 1e-12);
        assert!((s.hurst - 0.5).abs() < 1e-12);
        assert!((s.lambda - 1.12).abs() < 1e-12);
        assert!((s.alpha1 - 0.44).abs() < 1e-12);
        assert!((s.alpha_min - 0.214).abs() < 1e-3);
        assert!((s.alpha_max - 0.906).abs() < 1e-3);
        assert!((s.alpha_min - (0.56 - 2.0 * 0.03f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn unifractal_spike() {
        let s = spectrum_from_tau(0.5, 0.0).unwrap();
        assert_eq!((s.hurst, s.lambda), (0.5, 1.0));
        assert_eq!((s.alpha0, s.alpha1, s.alpha_min, s.alpha_max), (0.5, 0.5, 0.5, 0.5));
        let fit = ScalingFit {
            tau1: 0.5,
            tau2: 0.0,
            intercepts: vec![],
            rss: 0.0,
        };
        assert_eq!(spectrum_curve(&fit, &[0.1, 0.5, 0.9]), vec![(0.5, 1.0)]);
    }

    #[test]
    fn spectrum_rejects_complex_root() {
        assert!(matches!(
            spectrum_from_tau(0.5, -0.1),
            Err(MmarError::NoRealRoot { .. })
        ));
        assert!(matches!(
            spectrum_from_tau(-0.1, 0.0),
            Err(MmarError::NoRealRoot { .. })
        ));
    }

    #[test]
    fn legendre_geometry() {
        let fit = ScalingFit {
            tau1: 0.56,
            tau2: -0.03,
            intercepts: vec![],
            rss: 0.0,
        };
        let s = fit.spectrum().unwrap();
        let pts = spectrum_curve(&fit, &[s.alpha0, 0.44, s.alpha_min, s.alpha_max]);
        assert!((pts[0].1 - 1.0).abs() < 1e-12);
        assert!((pts[1].1 - 0.88).abs() < 1e-12);
        assert!((pts[1].1 - s.alpha1 / s.hurst).abs() < 1e-12);
        assert!(pts[2].1.abs() < 1e-12 && pts[3].1.abs() < 1e-12);
    }

    #[test]
    fn legendre_matches_numeric_minimum() {
        let (tau1, tau2) = (0.61, -0.045);
        for alpha in [0.3, 0.45, 0.61, 0.8, 0.95] {
            let numeric = (0..=200_000)
                .map(|i| -50.0 + i as f64 * 0.0005)
                .map(|q| alpha * q - (-1.0 + tau1 * q + tau2 * q * q))
                .fold(f64::INFINITY, f64::min);
            assert!((numeric - legendre(tau1, tau2, alpha)).abs() < 1e-6);
        }
    }

    #[test]
    fn ballistic_path_is_rejected() {
        let r = LogReturnSeries::new(vec![1.0; 2000], Origin::Observed).unwrap();
        assert!(matches!(
            estimate(&r, &Grids::for_length(2000).unwrap()),
            Err(MmarError::Degenerate(_))
        ));
    }

    #[test]
    fn default_scale_grid_shape() {
        let ns = default_scales(5000);
        assert_eq!(ns[0], 3);
        assert_eq!(*ns.last().unwrap(), 500);
        assert!(ns.len() >= 12 && ns.len() <= 15);
        assert!(ns.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(default_moments().len(), 8);
    }

    proptest! {
        #[test]
        fn round_trip_through_tau(h in 0.01f64..0.99, lambda in 1.0001f64..1.999) {
            let s = spectrum_from_tau(lambda * h, -(lambda - 1.0) * h * h).unwrap();
            prop_assert!((s.hurst - h).abs() < 1e-12);
            prop_assert!((s.lambda - lambda).abs() < 1e-12);
        }

        #[test]
        fn scale_and_sign_invariance(c in 0.01f64..100.0, stream in 0u64..50) {
            let r = crate::longmem::simulate_niid(1500, crate::series::SeedSpec::new(12, stream)).unwrap();
            let grids = Grids::for_length(1500).unwrap();
            let base = estimate(&r, &grids).unwrap();
            let scaled = estimate(&r.scaled(c).unwrap(), &grids).unwrap();
            let flipped = estimate(&r.scaled(-1.0).unwrap(), &grids).unwrap();
            prop_assert!((base.fit.tau1 - scaled.fit.tau1).abs() < 1e-9);
            prop_assert!((base.fit.tau2 - scaled.fit.tau2).abs() < 1e-9);
            prop_assert!((base.hurst() - scaled.hurst()).abs() < 1e-9);
            prop_assert!((base.lambda() - scaled.lambda()).abs() < 1e-9);
            for ((q, a0), (_, a1)) in base.fit.intercepts.iter().zip(&scaled.fit.intercepts) {
                prop_assert!((a1 - a0 - q * c.ln()).abs() < 1e-8);
            }
            prop_assert!((base.fit.tau1 - flipped.fit.tau1).abs() < 1e-12);
            prop_assert!((base.fit.tau2 - flipped.fit.tau2).abs() < 1e-12);
        }
    }
}
