//! Price CSV files and the on-disk cloud cache.
//!
//! Price files are `date,price` with a header row, ISO-8601 dates in strictly
//! ascending order and decimal prices. Clouds are stored as one JSON document
//! each, named by the fingerprint of their [`CloudKey`].

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{MmarError, Result};
use crate::mctest::{build_cloud, CloudKey, EstimateCloud};
use crate::series::PriceSeries;

/// Files with fewer rows load but draw a warning.
pub const MIN_RECOMMENDED_ROWS: usize = 100;

const CLOUD_FORMAT: &str = "mmar-cloud";
const CLOUD_FORMAT_VERSION: u32 = 1;

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| MmarError::io(path, e))?;
    let series = read_prices(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file), path)?;
    if series.len() < MIN_RECOMMENDED_ROWS {
        warn!(
            "{}: only {} rows; at least {MIN_RECOMMENDED_ROWS} recommended",
            path.display(),
            series.len()
        );
    }
    debug!("loaded {} prices from {}", series.len(), path.display());
    Ok(series)
}

fn read_prices<R: std::io::Read>(mut reader: csv::Reader<R>, path: &Path) -> Result<PriceSeries> {
    let parse_err = |line: u64, message: String| MmarError::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message,
    };

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    let names: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if names != ["date", "price"] {
        return Err(parse_err(
            1,
            format!(
                "expected header `date,price`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut prices = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
        let price: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad price `{}`", &record[1])))?;
        if !price.is_finite() || price <= 0.0 {
            return Err(parse_err(
                line,
                format!("price must be positive and finite, got {price}"),
            ));
        }
        if let Some(&prev) = dates.last() {
            if date == prev {
                return Err(parse_err(line, format!("duplicate date {date}")));
            }
            if date < prev {
                return Err(parse_err(line, format!("dates not ascending: {date} follows {prev}")));
            }
        }
        dates.push(date);
        prices.push(price);
    }
    if prices.is_empty() {
        return Err(MmarError::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    PriceSeries::with_dates(prices, dates)
}

/// Writes `date,price` rows. Series without dates get consecutive calendar
/// days starting at `default_start`.
pub fn write_price_csv(path: impl AsRef<Path>, series: &PriceSeries, default_start: NaiveDate) -> Result<()> {
    let path = path.as_ref();
    let dates = match series.dates() {
        Some(d) => d.to_vec(),
        None => daily_dates(default_start, series.len())?,
    };
    let mut out = String::with_capacity(series.len() * 24);
    out.push_str("date,price\n");
    for (d, p) in dates.iter().zip(series.values()) {
        // `Display` for f64 is the shortest exact representation.
        out.push_str(&format!("{},{p}\n", d.format("%Y-%m-%d")));
    }
    write_atomic(path, out.as_bytes())
}

pub fn daily_dates(start: NaiveDate, count: usize) -> Result<Vec<NaiveDate>> {
    (0..count as u64)
        .map(|i| {
            start
                .checked_add_days(Days::new(i))
                .ok_or_else(|| MmarError::InvalidParameter(format!("date overflow {i} days after {start}")))
        })
        .collect()
}

/// Writes through a temporary sibling so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MmarError::io(parent, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| MmarError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| MmarError::io(path, e))
}

/// On-disk form of a cloud: a small metadata header followed by the points.
#[derive(Debug, Serialize, Deserialize)]
struct CloudDocument {
    format: String,
    version: u32,
    fingerprint: String,
    created: String,
    replications_kept: usize,
    key: CloudKey,
    excluded: Vec<u64>,
    points: Vec<(f64, f64)>,
}

/// Directory of cached clouds.
#[derive(Debug, Clone)]
pub struct CloudCache {
    dir: PathBuf,
}

impl CloudCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CloudKey) -> PathBuf {
        self.dir.join(format!("cloud_{}.json", key.fingerprint()))
    }

    /// The cached cloud for `key`, if one exists and its stored key matches
    /// exactly. A mismatching or unreadable entry is treated as a miss.
    pub fn load(&self, key: &CloudKey) -> Result<Option<EstimateCloud>> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        match read_cloud(&path) {
            Ok(cloud) if cloud.key == *key => Ok(Some(cloud)),
            Ok(_) => {
                warn!("{}: stored key differs from requested key; ignoring", path.display());
                Ok(None)
            }
            Err(e) => {
                warn!("{}: unreadable cache entry ({e}); ignoring", path.display());
                Ok(None)
            }
        }
    }

    pub fn store(&self, cloud: &EstimateCloud) -> Result<PathBuf> {
        let path = self.path_for(&cloud.key);
        write_cloud(&path, cloud)?;
        Ok(path)
    }

    /// Loads the cloud for `key` or builds and stores it. The flag reports a
    /// cache hit.
    pub fn get_or_build(&self, key: &CloudKey) -> Result<(EstimateCloud, bool)> {
        if let Some(cloud) = self.load(key)? {
            info!("cloud cache hit: {}", self.path_for(key).display());
            return Ok((cloud, true));
        }
        info!("building cloud: {} replications at T = {}", key.reps, key.len);
        let cloud = build_cloud(key.clone())?;
        let path = self.store(&cloud)?;
        info!("cloud stored: {}", path.display());
        Ok((cloud, false))
    }
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &EstimateCloud) -> Result<()> {
    let doc = CloudDocument {
        format: CLOUD_FORMAT.into(),
        version: CLOUD_FORMAT_VERSION,
        fingerprint: cloud.key.fingerprint(),
        created: chrono::Utc::now().to_rfc3339(),
        replications_kept: cloud.len(),
        key: cloud.key.clone(),
        excluded: cloud.excluded.clone(),
        points: cloud.points.clone(),
    };
    write_atomic(path.as_ref(), &serde_json::to_vec_pretty(&doc)?)
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<EstimateCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| MmarError::io(path, e))?;
    let doc: CloudDocument = serde_json::from_slice(&bytes)?;
    let format_err = |message: String| MmarError::Format {
        path: path.to_path_buf(),
        message,
    };
    if doc.format != CLOUD_FORMAT || doc.version != CLOUD_FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported format {} v{}",
            doc.format, doc.version
        )));
    }
    if doc.fingerprint != doc.key.fingerprint() {
        return Err(format_err("fingerprint does not match stored key".into()));
    }
    if doc.points.len() != doc.replications_kept {
        return Err(format_err(format!(
            "header says {} points, found {}",
            doc.replications_kept,
            doc.points.len()
        )));
    }
    let mut cloud = EstimateCloud::from_points(doc.key, doc.points)?;
    cloud.excluded = doc.excluded;
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PriceSeries> {
        let reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        read_prices(reader, Path::new("mem.csv"))
    }

    fn line_of(err: MmarError) -> usize {
        match err {
            MmarError::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn two_rows() {
        let s = parse("date,price\n2020-01-01,100\n2020-01-02,101\n").unwrap();
        assert_eq!(s.values(), &[100.0, 101.0]);
        assert_eq!(s.dates().unwrap()[1], NaiveDate::from_ymd_opt(2020, 1, 2).unwrap());
    }

    #[test]
    fn malformed_price_names_line() {
        let err = parse("date,price\n2020-01-01,100\n2020-01-02,abc\n").unwrap_err();
        assert_eq!(line_of(err), 3);
    }

    #[test]
    fn ordering_and_duplicates() {
        assert_eq!(
            line_of(parse("date,price\n2020-01-02,1\n2020-01-01,2\n").unwrap_err()),
            3
        );
        assert_eq!(
            line_of(parse("date,price\n2020-01-01,1\n2020-01-01,2\n").unwrap_err()),
            3
        );
    }

    #[test]
    fn header_and_shape_errors() {
        assert_eq!(line_of(parse("when,price\n2020-01-01,1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("date,price\n2020-01-01,1,7\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("date,price\n2020/01/01,1\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("date,price\n2020-01-01,-3\n").unwrap_err()), 2);
        assert!(matches!(parse("date,price\n"), Err(MmarError::Format { .. })));
    }

    #[test]
    fn daily_dates_step_by_one() {
        let d = daily_dates(NaiveDate::from_ymd_opt(2020, 2, 28).unwrap(), 3).unwrap();
        assert_eq!(d[2], NaiveDate::from_ymd_opt(2020, 3, 1).unwrap());
    }
}
