//! End-to-end batch: load price files, pre-filter, estimate, test against
//! cached Monte Carlo clouds and write the report files.
//!
//! The batch runs in three stages. Every series is estimated in parallel.
//! The distinct clouds those estimates need are then loaded from the cache
//! or built, one at a time, each build parallel inside. Finally every series
//! is tested in parallel. A series that fails at any stage is reported with
//! its error and does not stop the others.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MmarError, Result};
use crate::io::{load_price_csv, write_atomic, CloudCache, MIN_RECOMMENDED_ROWS};
use crate::mctest::{
    build_cloud, kurtosis_check, CloudKey, EllipseFamily, EstimateCloud, NullModel, TestReport, DEFAULT_LEVELS,
    DEFAULT_REPS,
};
use crate::prefilter::{fit_ar, DEFAULT_ALPHA, DEFAULT_MAX_LAG};
use crate::scaling::{estimate, spectrum_curve, Grids, MmarEstimate};
use crate::series::{to_log_returns, LogReturnSeries, Origin};
use crate::stats::sample_kurtosis;

/// Points per spectrum curve and per ellipse boundary.
pub const CURVE_POINTS: usize = 201;

/// Which reference distribution the estimates are tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Estimate on AR-filtered returns, test against an NIID cloud.
    FilteredNiid,
    /// Estimate on raw returns, test against a cloud simulated from the
    /// fitted AR model.
    UnfilteredAr,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::FilteredNiid => "filtered-niid",
            Mode::UnfilteredAr => "unfiltered-ar",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Inclusive date range applied before computing returns.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Moment grid; `None` uses the default.
    pub qs: Option<Vec<f64>>,
    /// Block-size grid; `None` derives the default from each series' length.
    pub ns: Option<Vec<usize>>,
    pub reps: usize,
    /// Keep only the most recent `len` returns of each series.
    pub len: Option<usize>,
    pub master_seed: u64,
    pub mode: Mode,
    pub max_lag: usize,
    pub alpha: f64,
    pub output_dir: PathBuf,
    /// `None` disables the cloud cache.
    pub cache_dir: Option<PathBuf>,
    /// Replications for the kurtosis validity check; 0 skips it.
    pub kurtosis_reps: usize,
}

impl RunConfig {
    pub fn new(inputs: Vec<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            inputs,
            start: None,
            end: None,
            qs: None,
            ns: None,
            reps: DEFAULT_REPS,
            len: None,
            master_seed: 1,
            mode: Mode::FilteredNiid,
            max_lag: DEFAULT_MAX_LAG,
            alpha: DEFAULT_ALPHA,
            output_dir: output_dir.into(),
            cache_dir: None,
            kurtosis_reps: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(MmarError::InvalidParameter(m));
        if self.inputs.is_empty() {
            return invalid("no input files".into());
        }
        if self.reps < 100 {
            return invalid(format!("reps must be at least 100, got {}", self.reps));
        }
        if matches!(&self.qs, Some(q) if q.is_empty()) || matches!(&self.ns, Some(n) if n.is_empty()) {
            return invalid("grids must be non-empty".into());
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                return invalid(format!("start date {s} is after end date {e}"));
            }
        }
        if self.max_lag == 0 {
            return invalid("max_lag must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    pub fn grids_for(&self, len: usize) -> Result<Grids> {
        let defaults = Grids::for_length(len)?;
        Grids::new(
            self.qs.clone().unwrap_or(defaults.qs),
            self.ns.clone().unwrap_or(defaults.ns),
        )
    }
}

/// One input series after loading, filtering and estimation.
#[derive(Debug, Clone)]
pub struct PreparedSeries {
    pub name: String,
    /// Raw log returns.
    pub returns: LogReturnSeries,
    /// The series the estimate was computed on.
    pub estimated_on: LogReturnSeries,
    pub ar_coefficients: Vec<(usize, f64)>,
    pub grids: Grids,
    pub estimate: MmarEstimate,
    pub warnings: Vec<String>,
}

impl PreparedSeries {
    pub fn cloud_key(&self, config: &RunConfig) -> CloudKey {
        let null_model = match config.mode {
            Mode::FilteredNiid => NullModel::Niid,
            Mode::UnfilteredAr => NullModel::Ar {
                coefficients: self.ar_coefficients.clone(),
            },
        };
        CloudKey {
            null_model,
            len: self.returns.len(),
            reps: config.reps,
            master_seed: config.master_seed,
            grids: self.grids.clone(),
        }
    }
}

/// Loads one price file and produces its estimate under `config`.
pub fn prepare_series(name: &str, path: &Path, config: &RunConfig) -> Result<PreparedSeries> {
    let mut warnings = Vec::new();
    let prices = load_price_csv(path)?.restrict_dates(config.start, config.end)?;
    if prices.len() < MIN_RECOMMENDED_ROWS {
        warnings.push(format!(
            "only {} price rows; at least {MIN_RECOMMENDED_ROWS} recommended",
            prices.len()
        ));
    }
    if prices.len() < 2 {
        return Err(MmarError::TooShort {
            needed: 2,
            got: prices.len(),
        });
    }
    let mut returns = to_log_returns(&prices);
    if let Some(len) = config.len {
        if returns.len() < len {
            return Err(MmarError::TooShort {
                needed: len + 1,
                got: prices.len(),
            });
        }
        let values = returns.values();
        returns = LogReturnSeries::new(values[values.len() - len..].to_vec(), Origin::Observed)?;
    }

    let fit = fit_ar(&returns, config.max_lag, config.alpha)?;
    let estimated_on = match config.mode {
        Mode::FilteredNiid => fit.residuals.clone(),
        Mode::UnfilteredAr => returns.clone(),
    };
    let grids = config.grids_for(returns.len())?;
    let est = estimate(&estimated_on, &grids)?;
    warnings.extend(est.warnings.iter().cloned());

    Ok(PreparedSeries {
        name: name.to_string(),
        returns,
        estimated_on,
        ar_coefficients: fit.coefficients,
        grids,
        estimate: est,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisSummary {
    pub observed: f64,
    pub bound: f64,
    pub within: bool,
}

/// Per-series entry of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    #[serde(rename = "H_hat")]
    pub h_hat: f64,
    pub lambda_hat: f64,
    #[serde(rename = "p_H")]
    pub p_h: f64,
    pub p_lambda: f64,
    pub p_joint: f64,
    pub ar_lags: Vec<usize>,
    pub warnings: Vec<String>,
    pub ar_coefficients: Vec<(usize, f64)>,
    pub returns: usize,
    pub mode: Mode,
    pub tau1: f64,
    pub tau2: f64,
    pub alpha0: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub cloud_fingerprint: String,
    pub cloud_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kurtosis: Option<KurtosisSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportEntry {
    Ok(Box<SeriesReport>),
    Failed { error: String },
}

/// Everything the batch produced, keyed by series name.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub entries: BTreeMap<String, ReportEntry>,
    /// Number of clouds served from the cache.
    pub cache_hits: usize,
    pub clouds_built: usize,
    pub files: Vec<PathBuf>,
}

impl PipelineOutcome {
    pub fn report(&self, name: &str) -> Option<&SeriesReport> {
        match self.entries.get(name)? {
            ReportEntry::Ok(r) => Some(r),
            ReportEntry::Failed { .. } => None,
        }
    }

    pub fn failures(&self) -> usize {
        self.entries
            .values()
            .filter(|e| matches!(e, ReportEntry::Failed { .. }))
            .count()
    }
}

/// Series names from file stems, with `_2`, `_3`, ... appended to repeats.
pub fn series_names(inputs: &[PathBuf]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    inputs
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "series".into());
            let count = seen.entry(stem.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                stem
            } else {
                format!("{stem}_{count}")
            }
        })
        .collect()
}

struct Tested {
    report: SeriesReport,
    curve: Vec<(f64, f64)>,
    ellipses: Vec<Vec<(f64, f64)>>,
}

pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let names = series_names(&config.inputs);

    let prepared: Vec<(String, Result<PreparedSeries>)> = names
        .par_iter()
        .zip(config.inputs.par_iter())
        .map(|(name, path)| (name.clone(), prepare_series(name, path, config)))
        .collect();

    // Distinct clouds in first-use order.
    let mut keys: Vec<CloudKey> = Vec::new();
    for (_, p) in &prepared {
        if let Ok(p) = p {
            let key = p.cloud_key(config);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    let cache = config.cache_dir.as_ref().map(CloudCache::new);
    let mut cache_hits = 0;
    let mut clouds_built = 0;
    let mut clouds: Vec<CloudSlot> = Vec::new();
    for key in keys {
        let built = match &cache {
            Some(c) => c.get_or_build(&key),
            None => build_cloud(key.clone()).map(|cloud| (cloud, false)),
        };
        let entry = built.and_then(|(cloud, hit)| {
            if hit {
                cache_hits += 1;
            } else {
                clouds_built += 1;
            }
            let family = EllipseFamily::fit(&cloud)?;
            Ok((cloud, family))
        });
        clouds.push((key, entry.map_err(|e| e.to_string())));
    }

    let tested: Vec<(String, std::result::Result<Tested, String>)> = prepared
        .into_par_iter()
        .map(|(name, p)| {
            let outcome = match p {
                Ok(p) => test_series(&p, config, &clouds),
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = &outcome {
                error!("{name}: {e}");
            }
            (name, outcome)
        })
        .collect();

    let files = write_outputs(&config.output_dir, &tested)?;
    let entries = tested
        .into_iter()
        .map(|(name, t)| {
            let entry = match t {
                Ok(t) => ReportEntry::Ok(Box::new(t.report)),
                Err(error) => ReportEntry::Failed { error },
            };
            (name, entry)
        })
        .collect();
    Ok(PipelineOutcome {
        entries,
        cache_hits,
        clouds_built,
        files,
    })
}

type CloudSlot = (CloudKey, std::result::Result<(EstimateCloud, EllipseFamily), String>);

fn test_series(p: &PreparedSeries, config: &RunConfig, clouds: &[CloudSlot]) -> std::result::Result<Tested, String> {
    let key = p.cloud_key(config);
    let (cloud, family) = match clouds.iter().find(|(k, _)| *k == key) {
        Some((_, Ok((c, f)))) => (c, f),
        Some((_, Err(e))) => return Err(format!("reference cloud: {e}")),
        None => return Err("reference cloud missing".into()),
    };
    let (h, l) = (p.estimate.hurst(), p.estimate.lambda());
    let test = TestReport::with_family(cloud, family, h, l);
    let mut warnings = p.warnings.clone();
    if !cloud.excluded.is_empty() {
        warnings.push(format!("{} cloud replications excluded", cloud.excluded.len()));
    }

    let kurtosis = if config.kurtosis_reps > 0 {
        let observed = sample_kurtosis(p.estimated_on.values());
        let check = kurtosis_check(
            l.max(1.0),
            p.estimated_on.len(),
            config.kurtosis_reps,
            observed,
            config.master_seed,
        )
        .map_err(|e| format!("kurtosis check: {e}"))?;
        if !check.within {
            warnings.push(format!(
                "sample kurtosis {observed:.3} exceeds the simulated 95% bound {:.3}",
                check.bound
            ));
        }
        Some(KurtosisSummary {
            observed,
            bound: check.bound,
            within: check.within,
        })
    } else {
        None
    };

    let s = &p.estimate.spectrum;
    let alphas: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| s.alpha_min + (s.alpha_max - s.alpha_min) * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect();
    let curve = spectrum_curve(&p.estimate.fit, &alphas);
    let ellipses = DEFAULT_LEVELS
        .iter()
        .map(|&level| family.at_level(level).boundary(CURVE_POINTS))
        .collect();

    let mut lags: Vec<usize> = p.ar_coefficients.iter().map(|(k, _)| *k).collect();
    lags.sort_unstable();
    Ok(Tested {
        report: SeriesReport {
            h_hat: h,
            lambda_hat: l,
            p_h: test.p_h,
            p_lambda: test.p_lambda,
            p_joint: test.p_joint,
            ar_lags: lags,
            warnings,
            ar_coefficients: p.ar_coefficients.clone(),
            returns: p.returns.len(),
            mode: config.mode,
            tau1: p.estimate.fit.tau1,
            tau2: p.estimate.fit.tau2,
            alpha0: s.alpha0,
            alpha_min: s.alpha_min,
            alpha_max: s.alpha_max,
            cloud_fingerprint: key.fingerprint(),
            cloud_points: cloud.len(),
            kurtosis,
        },
        curve,
        ellipses,
    })
}

pub fn level_label(level: f64) -> String {
    format!("{level:.2}")
}

fn write_outputs(dir: &Path, tested: &[(String, std::result::Result<Tested, String>)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| MmarError::io(dir, e))?;
    let mut files = Vec::new();

    let json: BTreeMap<&str, ReportEntry> = tested
        .iter()
        .map(|(name, t)| {
            let entry = match t {
                Ok(t) => ReportEntry::Ok(Box::new(t.report.clone())),
                Err(e) => ReportEntry::Failed { error: e.clone() },
            };
            (name.as_str(), entry)
        })
        .collect();
    let path = dir.join("report.json");
    write_atomic(&path, &serde_json::to_vec_pretty(&json)?)?;
    files.push(path);

    let path = dir.join("report.txt");
    write_atomic(&path, render_text(tested).as_bytes())?;
    files.push(path);

    for (name, t) in tested {
        if let Ok(t) = t {
            let mut out = String::from("alpha,f\n");
            for (a, f) in &t.curve {
                let _ = writeln!(out, "{a},{f}");
            }
            let path = dir.join(format!("spectrum_{name}.csv"));
            write_atomic(&path, out.as_bytes())?;
            files.push(path);
        }
    }

    for (i, &level) in DEFAULT_LEVELS.iter().enumerate() {
        let mut out = String::from("series,lambda,H\n");
        for (name, t) in tested {
            if let Ok(t) = t {
                for (l, h) in &t.ellipses[i] {
                    let _ = writeln!(out, "{name},{l},{h}");
                }
            }
        }
        let path = dir.join(format!("ellipse_{}.csv", level_label(level)));
        write_atomic(&path, out.as_bytes())?;
        files.push(path);
    }
    info!("wrote {} files to {}", files.len(), dir.display());
    Ok(files)
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

fn render_text(tested: &[(String, std::result::Result<Tested, String>)]) -> String {
    let width = tested.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:<14}  {:>8}  {:>8}  {:>9}  {:>9}  {:>9}",
        "series", "T", "AR lags", "H_hat", "lam_hat", "p_H", "p_lambda", "p_joint"
    );
    for (name, t) in tested {
        match t {
            Ok(t) => {
                let r = &t.report;
                let lags = if r.ar_lags.is_empty() {
                    "-".to_string()
                } else {
                    r.ar_lags.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
                };
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>6}  {:<14}  {:>8.4}  {:>8.4}  {:>9}  {:>9}  {:>9}",
                    name,
                    r.returns,
                    lags,
                    r.h_hat,
                    r.lambda_hat,
                    format!("{:.3}{:<3}", r.p_h, stars(r.p_h)),
                    format!("{:.3}{:<3}", r.p_lambda, stars(r.p_lambda)),
                    format!("{:.3}{:<3}", r.p_joint, stars(r.p_joint)),
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{name:<width$}  FAILED: {e}");
            }
        }
    }
    let _ = writeln!(out, "\n* p < 0.10, ** p < 0.05, *** p < 0.01");
    for (name, t) in tested {
        if let Ok(t) = t {
            for w in &t.report.warnings {
                let _ = writeln!(out, "warning [{name}]: {w}");
            }
        }
    }
    out
}
