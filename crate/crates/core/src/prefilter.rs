//! Autoregressive pre-whitening of observed returns.
//!
//! All lags up to `max_lag` are fitted by OLS on the de-meaned series, the
//! lags whose two-sided t test is significant are kept and the model is
//! refitted on them alone; the refit repeats while any kept lag loses
//! significance.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{MmarError, Result};
use crate::series::{LogReturnSeries, Origin};

pub const DEFAULT_MAX_LAG: usize = 12;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    /// `(lag, rho)` for the retained lags, increasing lag.
    pub coefficients: Vec<(usize, f64)>,
    /// t statistics of the final fit, aligned with `coefficients`.
    pub tstats: Vec<(usize, f64)>,
    /// t statistics of every lag in the initial full fit.
    pub screening_tstats: Vec<(usize, f64)>,
    pub residuals: LogReturnSeries,
}

impl ArFit {
    pub fn retained_lags(&self) -> Vec<usize> {
        self.coefficients.iter().map(|c| c.0).collect()
    }

    pub fn max_lag(&self) -> usize {
        self.coefficients.last().map_or(0, |c| c.0)
    }

    pub fn rho(&self) -> Vec<(usize, f64)> {
        self.coefficients.clone()
    }
}

struct OlsResult {
    beta: Vec<f64>,
    tstats: Vec<f64>,
}

fn ols_on_lags(x: &[f64], lags: &[usize]) -> Result<OlsResult> {
    let start = *lags.iter().max().expect("non-empty lag set");
    let rows = x.len() - start;
    let k = lags.len();
    if rows <= k {
        return Err(MmarError::TooShort {
            needed: start + k + 1,
            got: x.len(),
        });
    }
    let design = DMatrix::from_fn(rows, k, |i, j| x[start + i - lags[j]]);
    let y = DVector::from_iterator(rows, x[start..].iter().copied());
    let xtx = design.transpose() * &design;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| MmarError::RankDeficient("lag matrix is singular".into()))?;
    let beta = chol.solve(&(design.transpose() * &y));
    let resid = &y - &design * &beta;
    let s2 = resid.norm_squared() / (rows - k) as f64;
    let inv = chol.inverse();
    let tstats = (0..k)
        .map(|j| {
            let se = (s2 * inv[(j, j)]).sqrt();
            beta[j] / se
        })
        .collect();
    Ok(OlsResult {
        beta: beta.iter().copied().collect(),
        tstats,
    })
}

fn critical_value(alpha: f64, df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha / 2.0)
}

pub fn fit_ar(returns: &LogReturnSeries, max_lag: usize, alpha: f64) -> Result<ArFit> {
    let n = returns.len();
    if max_lag == 0 {
        return Err(MmarError::InvalidParameter("max_lag must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MmarError::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if n <= 10 * max_lag {
        return Err(MmarError::TooShort {
            needed: 10 * max_lag + 1,
            got: n,
        });
    }
    let mean = returns.mean();
    let x: Vec<f64> = returns.values().iter().map(|v| v - mean).collect();

    let all: Vec<usize> = (1..=max_lag).collect();
    let screen = ols_on_lags(&x, &all)?;
    let crit = critical_value(alpha, n - max_lag - max_lag);
    let screening_tstats: Vec<(usize, f64)> = all.iter().copied().zip(screen.tstats.iter().copied()).collect();

    let mut lags: Vec<usize> = screening_tstats
        .iter()
        .filter(|(_, t)| t.abs() > crit)
        .map(|(l, _)| *l)
        .collect();
    let mut coefficients = Vec::new();
    let mut tstats = Vec::new();
    while !lags.is_empty() {
        let fit = ols_on_lags(&x, &lags)?;
        let df = n - lags.iter().max().unwrap() - lags.len();
        let crit = critical_value(alpha, df);
        let keep: Vec<usize> = lags
            .iter()
            .zip(&fit.tstats)
            .filter(|(_, t)| t.abs() > crit)
            .map(|(l, _)| *l)
            .collect();
        if keep.len() == lags.len() {
            coefficients = lags.iter().copied().zip(fit.beta).collect();
            tstats = lags.iter().copied().zip(fit.tstats).collect();
            break;
        }
        lags = keep;
    }

    let partial = ArFit {
        coefficients,
        tstats,
        screening_tstats,
        residuals: returns.clone(),
    };
    let residuals = apply_filter(returns, &partial)?;
    Ok(ArFit { residuals, ..partial })
}

/// `r_t - sum_k rho_k r_{t-k}` on the de-meaned series for `t` past the
/// largest retained lag, re-centered to mean zero. With no retained lags this
/// is just the de-meaned input.
pub fn apply_filter(returns: &LogReturnSeries, fit: &ArFit) -> Result<LogReturnSeries> {
    let p = fit.max_lag();
    if returns.len() <= p {
        return Err(MmarError::TooShort {
            needed: p + 1,
            got: returns.len(),
        });
    }
    let mean = returns.mean();
    let x: Vec<f64> = returns.values().iter().map(|v| v - mean).collect();
    if fit.coefficients.is_empty() {
        return LogReturnSeries::new(x, Origin::Filtered);
    }
    let mut y: Vec<f64> = (p..x.len())
        .map(|t| x[t] - fit.coefficients.iter().map(|&(k, rho)| rho * x[t - k]).sum::<f64>())
        .collect();
    let centre = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= centre);
    LogReturnSeries::new(y, Origin::Filtered)
}

/// AR series `r_t = sum_k rho_k r_{t-k} + u_t` with standard normal `u_t`.
pub(crate) fn simulate_ar(
    coefficients: &[(usize, f64)],
    len: usize,
    burn_in: usize,
    innovations: impl Iterator<Item = f64>,
) -> Vec<f64> {
    let mut r: Vec<f64> = Vec::with_capacity(len + burn_in);
    for u in innovations.take(len + burn_in) {
        let t = r.len();
        let ar: f64 = coefficients
            .iter()
            .filter(|(k, _)| *k <= t)
            .map(|&(k, rho)| rho * r[t - k])
            .sum();
        r.push(ar + u);
    }
    r.split_off(burn_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longmem::simulate_niid;
    use crate::series::{Lane, SeedSpec};
    use crate::stats::lag_autocorrelation;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, len: usize, seed: SeedSpec) -> LogReturnSeries {
        let mut rng = seed.rng(Lane::Autoregression);
        let u = std::iter::repeat_with(move || rng.sample::<f64, _>(StandardNormal));
        LogReturnSeries::new(simulate_ar(&[(1, rho)], len, 500, u), Origin::Simulated).unwrap()
    }

    /// Ljung-Box Q over lags 1..=h.
    fn ljung_box(x: &[f64], h: usize) -> f64 {
        let n = x.len() as f64;
        (1..=h)
            .map(|k| lag_autocorrelation(x, k).powi(2) / (n - k as f64))
            .sum::<f64>()
            * n
            * (n + 2.0)
    }

    #[test]
    fn few_false_lags_under_null() {
        let mut retained = 0usize;
        let mut at_most_one = 0usize;
        for s in 0..200 {
            let x = simulate_niid(2000, SeedSpec::new(500, s)).unwrap();
            let fit = fit_ar(&x, 12, 0.05).unwrap();
            retained += fit.coefficients.len();
            at_most_one += usize::from(fit.coefficients.len() <= 1);
        }
        let mean = retained as f64 / 200.0;
        assert!(mean < 1.0, "mean retained {mean}");
        assert!(at_most_one >= 140, "{at_most_one}");
    }

    #[test]
    fn recovers_ar1() {
        let x = ar1(0.3, 5000, SeedSpec::new(501, 1));
        let fit = fit_ar(&x, 12, 0.05).unwrap();
        let rho1 = fit.coefficients.iter().find(|c| c.0 == 1).expect("lag 1 retained").1;
        assert!((rho1 - 0.3).abs() < 0.03, "{rho1}");
        assert!(lag_autocorrelation(fit.residuals.values(), 1).abs() < 0.03);
        for (_, t) in &fit.tstats {
            assert!(t.abs() > 1.96);
        }
    }

    #[test]
    fn empty_model_is_demeaning() {
        let x = LogReturnSeries::new((0..200).map(|i| 1.0 + (i % 2) as f64).collect(), Origin::Observed).unwrap();
        let fit = ArFit {
            coefficients: vec![],
            tstats: vec![],
            screening_tstats: vec![],
            residuals: x.clone(),
        };
        let y = apply_filter(&x, &fit).unwrap();
        let expected: Vec<f64> = x.values().iter().map(|v| v - 1.5).collect();
        assert_eq!(y.values(), &expected[..]);

        for s in 0..20 {
            let x = simulate_niid(1000, SeedSpec::new(502, s)).unwrap();
            let fit = fit_ar(&x, 12, 0.05).unwrap();
            if fit.coefficients.is_empty() {
                let m = x.mean();
                let demeaned: Vec<f64> = x.values().iter().map(|v| v - m).collect();
                assert_eq!(fit.residuals.values(), &demeaned[..]);
                return;
            }
        }
        panic!("no seed retained zero lags");
    }

    #[test]
    fn refiltering_reproduces_residuals() {
        let x = ar1(0.25, 3000, SeedSpec::new(503, 0));
        let fit = fit_ar(&x, 12, 0.05).unwrap();
        assert_eq!(apply_filter(&x, &fit).unwrap(), fit.residuals);
        assert_eq!(fit.residuals.len(), x.len() - fit.max_lag());
    }

    #[test]
    fn filter_is_linear() {
        let x = ar1(0.4, 2000, SeedSpec::new(504, 0));
        let fit = fit_ar(&x, 12, 0.05).unwrap();
        let c = -3.7;
        let a = apply_filter(&x.scaled(c).unwrap(), &fit).unwrap();
        let b = apply_filter(&x, &fit).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((u - c * v).abs() < 1e-12);
        }
    }

    #[test]
    fn filtered_ar_is_white() {
        // chi-square(12) 95% point
        let q95 = 21.026;
        let white = (0..50)
            .filter(|&s| {
                let x = ar1(0.3, 3000, SeedSpec::new(505, s));
                let fit = fit_ar(&x, 12, 0.05).unwrap();
                ljung_box(fit.residuals.values(), 12) < q95
            })
            .count();
        assert!(white >= 45, "{white}/50");
    }

    #[test]
    fn refit_on_residuals_finds_nothing() {
        let empty = (0..50)
            .filter(|&s| {
                let x = ar1(0.3, 3000, SeedSpec::new(506, s));
                let fit = fit_ar(&x, 12, 0.05).unwrap();
                fit_ar(&fit.residuals, 12, 0.05).unwrap().coefficients.is_empty()
            })
            .count();
        assert!(empty >= 45, "{empty}/50");
    }

    #[test]
    fn errors() {
        let constant = LogReturnSeries::new(vec![0.5; 500], Origin::Observed).unwrap();
        assert!(matches!(fit_ar(&constant, 12, 0.05), Err(MmarError::RankDeficient(_))));
        let short = simulate_niid(100, SeedSpec::new(1, 1)).unwrap();
        assert!(fit_ar(&short, 12, 0.05).is_err());
        let fit = ArFit {
            coefficients: vec![(5, 0.1)],
            tstats: vec![],
            screening_tstats: vec![],
            residuals: short.clone(),
        };
        let tiny = LogReturnSeries::new(vec![0.1, 0.2, 0.3], Origin::Observed).unwrap();
        assert!(apply_filter(&tiny, &fit).is_err());
    }
}
