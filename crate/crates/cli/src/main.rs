use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mmar_core::io::{read_cloud, write_price_csv, CloudCache};
use mmar_core::longmem::{simulate_mmar, simulate_niid, MmarParams, DEFAULT_TRUNCATION};
use mmar_core::mctest::{build_cloud, size_power_cell, CloudKey, NullModel, PowerConfig, DEFAULT_LEVELS};
use mmar_core::pipeline::{prepare_series, run_pipeline, series_names, Mode, ReportEntry, RunConfig};
use mmar_core::prefilter::{DEFAULT_ALPHA, DEFAULT_MAX_LAG};
use mmar_core::scaling::Grids;
use mmar_core::{cumulate, PriceSeries, SeedSpec};

/// Simulate, estimate and test the multifractal model of asset returns.
#[derive(Debug, Parser)]
#[command(name = "mmar", version, about)]
struct Cli {
    /// Worker threads (default: one per CPU).
    #[arg(long, global = true, env = "MMAR_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic MMAR (or NIID) price series as `date,price` CSV.
    Simulate(SimulateArgs),
    /// Print point estimates of H and lambda for price files.
    Estimate(EstimateArgs),
    /// Run the full three-test report and write it to the output directory.
    Test(TestArgs),
    /// Estimate size or power of the three tests at one parameter cell.
    Power(PowerArgs),
    /// Build or inspect cached reference clouds.
    #[command(subcommand)]
    Cloud(CloudCommand),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output CSV path.
    #[arg(short, long)]
    out: PathBuf,
    /// Hurst exponent.
    #[arg(long, default_value_t = 0.5)]
    hurst: f64,
    /// Cascade parameter; 1 gives a Gaussian fractional process.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Number of returns (the file has one more price row).
    #[arg(long, default_value_t = 5000)]
    len: usize,
    /// Simulate independent N(0,1) returns instead of an MMAR.
    #[arg(long)]
    niid: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Stream index within the seed.
    #[arg(long, default_value_t = 1)]
    stream: u64,
    /// Standard deviation applied to the unit-variance returns.
    #[arg(long, default_value_t = 0.01)]
    scale: f64,
    /// Initial price.
    #[arg(long, default_value_t = 100.0)]
    p0: f64,
    /// Date of the first row; later rows follow daily.
    #[arg(long, default_value = "2000-01-01")]
    start: NaiveDate,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    /// Price CSV files with a `date,price` header.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// First date to keep (inclusive, YYYY-MM-DD).
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last date to keep (inclusive, YYYY-MM-DD).
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Keep only the most recent LEN returns (default: all).
    #[arg(long)]
    len: Option<usize>,
    /// Moment grid, comma separated (default: 0.5,1.0,...,4.0).
    #[arg(long, value_delimiter = ',')]
    qs: Option<Vec<f64>>,
    /// Block sizes, comma separated (default: 15 log-spaced sizes in [3, T/10]).
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Which returns are estimated and which null is simulated.
    #[arg(long, value_enum, default_value_t = ModeArg::FilteredNiid)]
    mode: ModeArg,
    /// Largest autoregressive lag considered by the pre-filter.
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
    /// Significance level for keeping an autoregressive lag.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    ar_alpha: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Estimate on AR-filtered returns; critical values from NIID simulations.
    FilteredNiid,
    /// Estimate on raw returns; critical values from AR simulations.
    UnfilteredAr,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FilteredNiid => Mode::FilteredNiid,
            ModeArg::UnfilteredAr => Mode::UnfilteredAr,
        }
    }
}

#[derive(Debug, Args)]
struct CacheArgs {
    /// Directory of cached reference clouds.
    #[arg(long, env = "MMAR_CACHE_DIR", default_value = ".mmar-cache")]
    cache_dir: PathBuf,
    /// Always rebuild clouds and never write them to disk.
    #[arg(long)]
    no_cache: bool,
}

impl CacheArgs {
    fn dir(&self) -> Option<PathBuf> {
        (!self.no_cache).then(|| self.cache_dir.clone())
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    series: SeriesArgs,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    series: SeriesArgs,
    /// Directory for report.json, report.txt and the CSV data files.
    #[arg(short, long, default_value = "mmar-report")]
    out_dir: PathBuf,
    /// Monte Carlo replications per reference cloud.
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    /// Master seed for all simulations.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replications for the kurtosis validity check (0 skips it).
    #[arg(long, default_value_t = 0)]
    kurtosis_reps: usize,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Debug, Args)]
struct PowerArgs {
    /// True Hurst exponent of the simulated series.
    #[arg(long, default_value_t = 0.5)]
    hurst: f64,
    /// True cascade parameter of the simulated series.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Returns per simulated series.
    #[arg(long, default_value_t = 2500)]
    len: usize,
    /// Simulated series tested.
    #[arg(long, default_value_t = 2000)]
    reps_outer: usize,
    /// Replications in the NIID reference cloud.
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Debug, Subcommand)]
enum CloudCommand {
    /// Build a reference cloud and store it in the cache.
    Build(CloudBuildArgs),
    /// Summarize a cloud file.
    Inspect {
        /// Path to a cloud JSON file.
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
struct CloudBuildArgs {
    /// Returns per simulated series.
    #[arg(long, default_value_t = 5000)]
    len: usize,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// AR null as `lag:rho` pairs, e.g. `1:0.05,3:-0.02` (default: NIID).
    #[arg(long, value_delimiter = ',')]
    ar: Vec<String>,
    /// Moment grid (default: 0.5,1.0,...,4.0).
    #[arg(long, value_delimiter = ',')]
    qs: Option<Vec<f64>>,
    /// Block sizes (default: 15 log-spaced sizes in [3, T/10]).
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[command(flatten)]
    cache: CacheArgs,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }

    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => test(a),
        Command::Power(a) => power(a),
        Command::Cloud(CloudCommand::Build(a)) => cloud_build(a),
        Command::Cloud(CloudCommand::Inspect { path }) => cloud_inspect(path),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if !(a.scale > 0.0 && a.p0 > 0.0) {
        bail!("scale and p0 must be positive");
    }
    let seed = SeedSpec::new(a.seed, a.stream);
    let returns = if a.niid {
        simulate_niid(a.len, seed)?
    } else {
        simulate_mmar(&MmarParams::new(a.hurst, a.lambda, a.len)?, seed, DEFAULT_TRUNCATION)?
    };
    let prices: Vec<f64> = cumulate(&returns.scaled(a.scale)?, 0.0)
        .into_iter()
        .map(|p| a.p0 * p.exp())
        .collect();
    write_price_csv(&a.out, &PriceSeries::new(prices)?, a.start)?;
    info!("wrote {} rows to {}", a.len + 1, a.out.display());
    Ok(())
}

fn run_config(s: SeriesArgs, out_dir: PathBuf) -> RunConfig {
    let mut c = RunConfig::new(s.inputs, out_dir);
    c.start = s.start;
    c.end = s.end;
    c.len = s.len;
    c.qs = s.qs;
    c.ns = s.ns;
    c.mode = s.mode.into();
    c.max_lag = s.max_lag;
    c.alpha = s.ar_alpha;
    c
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let config = run_config(a.series, PathBuf::new());
    let names = series_names(&config.inputs);
    println!(
        "{:<12} {:>6} {:<12} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>8}",
        "series", "T", "AR lags", "H_hat", "lam_hat", "tau1", "tau2", "alpha0", "a_min", "a_max"
    );
    let mut failed = 0;
    for (name, path) in names.iter().zip(&config.inputs) {
        match prepare_series(name, path, &config) {
            Ok(p) => {
                let s = &p.estimate.spectrum;
                let lags: Vec<String> = p.ar_coefficients.iter().map(|(k, _)| k.to_string()).collect();
                let lags = if lags.is_empty() {
                    "-".to_string()
                } else {
                    lags.join(",")
                };
                println!(
                    "{:<12} {:>6} {:<12} {:>8.4} {:>8.4} {:>8.4} {:>9.5} {:>8.4} {:>8.4} {:>8.4}",
                    name,
                    p.returns.len(),
                    lags,
                    s.hurst,
                    s.lambda,
                    s.tau1,
                    s.tau2,
                    s.alpha0,
                    s.alpha_min,
                    s.alpha_max
                );
                for w in &p.warnings {
                    eprintln!("warning [{name}]: {w}");
                }
            }
            Err(e) => {
                failed += 1;
                println!("{name:<12} FAILED: {e}");
            }
        }
    }
    if failed == names.len() {
        bail!("every series failed");
    }
    Ok(())
}

fn test(a: TestArgs) -> Result<()> {
    let mut config = run_config(a.series, a.out_dir);
    config.reps = a.reps;
    config.master_seed = a.seed;
    config.cache_dir = a.cache.dir();
    config.kurtosis_reps = a.kurtosis_reps;
    let outcome = run_pipeline(&config)?;
    let text = std::fs::read_to_string(config.output_dir.join("report.txt")).context("reading report.txt")?;
    print!("{text}");
    eprintln!(
        "clouds: {} built, {} from cache; reports in {}",
        outcome.clouds_built,
        outcome.cache_hits,
        config.output_dir.display()
    );
    if outcome
        .entries
        .values()
        .all(|e| matches!(e, ReportEntry::Failed { .. }))
    {
        bail!("every series failed");
    }
    Ok(())
}

fn power(a: PowerArgs) -> Result<()> {
    let key = CloudKey {
        null_model: NullModel::Niid,
        len: a.len,
        reps: a.reps,
        master_seed: a.seed,
        grids: Grids::for_length(a.len)?,
    };
    let cloud = match a.cache.dir() {
        Some(dir) => CloudCache::new(dir).get_or_build(&key)?.0,
        None => build_cloud(key)?,
    };
    // Outer series use a different master seed from the cloud.
    let config = PowerConfig::new(a.hurst, a.lambda, a.len, a.reps_outer, a.seed.wrapping_add(1));
    let cell = size_power_cell(&config, &cloud)?;
    println!(
        "H = {}, lambda = {}, T = {}, {} series",
        a.hurst, a.lambda, a.len, a.reps_outer
    );
    println!(
        "{:>6} {:>10} {:>10} {:>10}",
        "level", "test (i)", "test (ii)", "test (iii)"
    );
    for (i, level) in DEFAULT_LEVELS.iter().enumerate() {
        println!(
            "{:>6.2} {:>10.3} {:>10.3} {:>10.3}",
            level, cell.rates_h[i], cell.rates_lambda[i], cell.rates_joint[i]
        );
    }
    if cell.failed > 0 {
        eprintln!("{} simulated series failed to estimate and were skipped", cell.failed);
    }
    Ok(())
}

fn parse_ar(pairs: &[String]) -> Result<Vec<(usize, f64)>> {
    pairs
        .iter()
        .map(|s| {
            let (k, r) = s
                .split_once(':')
                .with_context(|| format!("expected lag:rho, got `{s}`"))?;
            Ok((k.trim().parse()?, r.trim().parse()?))
        })
        .collect()
}

fn cloud_build(a: CloudBuildArgs) -> Result<()> {
    let defaults = Grids::for_length(a.len)?;
    let grids = Grids::new(a.qs.unwrap_or(defaults.qs), a.ns.unwrap_or(defaults.ns))?;
    let coefficients = parse_ar(&a.ar)?;
    let null_model = if coefficients.is_empty() {
        NullModel::Niid
    } else {
        NullModel::Ar { coefficients }
    };
    let key = CloudKey {
        null_model,
        len: a.len,
        reps: a.reps,
        master_seed: a.seed,
        grids,
    };
    let Some(dir) = a.cache.dir() else {
        bail!("cloud build needs a cache directory");
    };
    let cache = CloudCache::new(dir);
    let (cloud, hit) = cache.get_or_build(&key)?;
    println!(
        "{} {} ({} points)",
        if hit { "cached" } else { "built" },
        cache.path_for(&key).display(),
        cloud.len()
    );
    Ok(())
}

fn cloud_inspect(path: PathBuf) -> Result<()> {
    let cloud = read_cloud(&path).with_context(|| format!("reading {}", path.display()))?;
    let (mh, ml) = cloud.mean();
    println!("fingerprint  {}", cloud.key.fingerprint());
    println!("null model   {}", serde_summary(&cloud.key.null_model));
    println!("T            {}", cloud.key.len);
    println!("reps         {} ({} excluded)", cloud.key.reps, cloud.excluded.len());
    println!("seed         {}", cloud.key.master_seed);
    println!("q grid       {:?}", cloud.key.grids.qs);
    println!("n grid       {:?}", cloud.key.grids.ns);
    println!("mean H       {mh:.5}");
    println!("mean lambda  {ml:.5}");
    Ok(())
}

fn serde_summary(m: &NullModel) -> String {
    match m {
        NullModel::Niid => "niid".into(),
        NullModel::Ar { coefficients } => {
            let parts: Vec<String> = coefficients.iter().map(|(k, r)| format!("{k}:{r}")).collect();
            format!("ar [{}]", parts.join(", "))
        }
    }
}
