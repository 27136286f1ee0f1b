//! Domain types shared by every stage: price levels, log returns and the
//! seeded random-stream contract used by the Monte Carlo engine.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MmarError, Result};

/// Strictly positive price levels with an optional date index.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    values: Vec<f64>,
    dates: Option<Vec<NaiveDate>>,
}

impl PriceSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::validate(&values)?;
        Ok(Self { values, dates: None })
    }

    pub fn with_dates(values: Vec<f64>, dates: Vec<NaiveDate>) -> Result<Self> {
        Self::validate(&values)?;
        if dates.len() != values.len() {
            return Err(MmarError::InvalidParameter(format!(
                "{} dates for {} prices",
                dates.len(),
                values.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(MmarError::InvalidParameter(format!(
                "dates not strictly increasing at index {}: {} then {}",
                i + 1,
                dates[i],
                dates[i + 1]
            )));
        }
        Ok(Self {
            values,
            dates: Some(dates),
        })
    }

    fn validate(values: &[f64]) -> Result<()> {
        if values.len() < 2 {
            return Err(MmarError::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(MmarError::NonFinite { index });
            }
            if value <= 0.0 {
                return Err(MmarError::NonPositivePrice { index, value });
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps observations whose date falls in `[start, end]` (either bound optional).
    /// Series without dates are returned unchanged.
    pub fn restrict_dates(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<Self> {
        let Some(dates) = &self.dates else {
            return Ok(self.clone());
        };
        let keep = |d: &NaiveDate| start.is_none_or(|s| *d >= s) && end.is_none_or(|e| *d <= e);
        let (values, dates): (Vec<f64>, Vec<NaiveDate>) = self
            .values
            .iter()
            .zip(dates)
            .filter(|(_, d)| keep(d))
            .map(|(v, d)| (*v, *d))
            .unzip();
        Self::with_dates(values, dates)
    }
}

/// Where a return series came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Observed,
    Simulated,
    Filtered,
}

/// One-period log returns. Always non-empty and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogReturnSeries {
    values: Vec<f64>,
    origin: Origin,
}

impl LogReturnSeries {
    pub fn new(values: Vec<f64>, origin: Origin) -> Result<Self> {
        if values.is_empty() {
            return Err(MmarError::TooShort { needed: 1, got: 0 });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(MmarError::NonFinite { index });
        }
        Ok(Self { values, origin })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect(), self.origin)
    }
}

/// `ln p[t+1] - ln p[t]` for every adjacent pair.
pub fn to_log_returns(prices: &PriceSeries) -> LogReturnSeries {
    let values = prices.values().windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
    LogReturnSeries {
        values,
        origin: Origin::Observed,
    }
}

/// Running sum of returns starting from the level `p0`; one element longer than the input.
pub fn cumulate(returns: &LogReturnSeries, p0: f64) -> Vec<f64> {
    cumulate_slice(returns.values(), p0)
}

pub(crate) fn cumulate_slice(returns: &[f64], p0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut level = p0;
    out.push(level);
    for r in returns {
        level += r;
        out.push(level);
    }
    out
}

/// Identifies one independent random stream: replication `stream_index` of a
/// Monte Carlo run keyed by `master_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

/// Independent lanes within a single replication, so that (for example) the
/// innovations do not depend on how many cascade multipliers were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Multipliers = 1,
    Offset = 2,
    Innovations = 3,
    Autoregression = 4,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// ChaCha8 keyed by `(master_seed, lane)` with `stream_index` as the
    /// ChaCha stream id. Distinct triples give non-overlapping keystreams and
    /// the output never depends on scheduling.
    pub fn rng(&self, lane: Lane) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&(lane as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn returns_of(prices: &[f64]) -> Vec<f64> {
        to_log_returns(&PriceSeries::new(prices.to_vec()).unwrap()).into_values()
    }

    #[test]
    fn constant_price_has_zero_returns() {
        assert_eq!(returns_of(&[1.0, 1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn exponential_growth_has_unit_returns() {
        let e = std::f64::consts::E;
        let r = returns_of(&[1.0, e, e * e]);
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(r[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ratio_returns() {
        let r = returns_of(&[100.0, 101.0, 99.0]);
        assert_relative_eq!(r[0], 0.009950330853168, epsilon = 1e-12);
        assert_relative_eq!(r[1], -0.020000666706669, epsilon = 1e-12);
    }

    #[test]
    fn non_positive_price_names_index() {
        match PriceSeries::new(vec![1.0, 2.0, 0.0, 3.0]) {
            Err(MmarError::NonPositivePrice { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(PriceSeries::new(vec![1.0]).is_err());
    }

    #[test]
    fn dates_must_increase() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let dates = vec![d("2020-01-02"), d("2020-01-02")];
        assert!(PriceSeries::with_dates(vec![1.0, 2.0], dates).is_err());
    }

    #[test]
    fn date_restriction() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let dates = vec![d("2020-01-01"), d("2020-01-02"), d("2020-01-03"), d("2020-01-04")];
        let p = PriceSeries::with_dates(vec![1.0, 2.0, 3.0, 4.0], dates).unwrap();
        let sub = p.restrict_dates(Some(d("2020-01-02")), Some(d("2020-01-03"))).unwrap();
        assert_eq!(sub.values(), &[2.0, 3.0]);
    }

    #[test]
    fn cumulate_examples() {
        let zeros = LogReturnSeries::new(vec![0.0; 3], Origin::Simulated).unwrap();
        assert_eq!(cumulate(&zeros, 5.0), vec![5.0; 4]);
        let updown = LogReturnSeries::new(vec![1.0, -1.0], Origin::Simulated).unwrap();
        assert_eq!(cumulate(&updown, 0.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_returns() {
        assert!(LogReturnSeries::new(vec![0.0, f64::NAN], Origin::Observed).is_err());
        assert!(LogReturnSeries::new(vec![], Origin::Observed).is_err());
    }

    #[test]
    fn seed_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8)
            .map(|_| SeedSpec::new(7, 3).rng(Lane::Innovations).random())
            .collect();
        let b: Vec<u64> = (0..8)
            .map(|_| SeedSpec::new(7, 3).rng(Lane::Innovations).random())
            .collect();
        assert_eq!(a, b);
        let mut x = SeedSpec::new(7, 3).rng(Lane::Innovations);
        let mut y = SeedSpec::new(7, 4).rng(Lane::Innovations);
        let mut z = SeedSpec::new(7, 3).rng(Lane::Multipliers);
        let (x, y, z): (u64, u64, u64) = (x.random(), y.random(), z.random());
        assert!(x != y && x != z && y != z);
    }

    proptest! {
        #[test]
        fn log_returns_and_cumulate_are_inverse(
            prices in proptest::collection::vec(1e-3f64..1e4, 2..200)
        ) {
            let series = PriceSeries::new(prices.clone()).unwrap();
            let levels = cumulate(&to_log_returns(&series), prices[0].ln());
            for (level, p) in levels.iter().zip(&prices) {
                let expected = p.ln();
                prop_assert!((level - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }
}
