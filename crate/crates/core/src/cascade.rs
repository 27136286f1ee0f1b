//! Binary lognormal multiplier cascade producing multifractal trading-time
//! increments.
//!
//! Level `k` of the tree holds `2^k` multipliers `m = 2^(-V)` with
//! `V ~ Normal(lambda, 2(lambda - 1)/ln 2)`, so that `E[m] = 1/2` and the
//! scaling function of the measure is `tau(q) = lambda*q - 1 - (lambda - 1)*q^2`.
//! A cell's mass is the product of the multipliers on its root path.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MmarError, Result};
use crate::series::{Lane, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    lambda: f64,
    len: usize,
}

impl CascadeParams {
    pub fn new(lambda: f64, len: usize) -> Result<Self> {
        check_lambda(lambda)?;
        if len < 2 {
            return Err(MmarError::InvalidParameter(format!(
                "cascade length must be at least 2, got {len}"
            )));
        }
        Ok(Self { lambda, len })
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

    /// Variance of `-log2 m`.
    pub fn multiplier_variance(&self) -> f64 {
        multiplier_variance(self.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(MmarError::InvalidParameter(format!(
            "lambda must be finite and >= 1, got {lambda}"
        )));
    }
    Ok(())
}

pub fn multiplier_variance(lambda: f64) -> f64 {
    2.0 * (lambda - 1.0) / std::f64::consts::LN_2
}

/// Trading-time increments; positive and summing to their count.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationIncrements(Vec<f64>);

impl DeformationIncrements {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct MultiplierLaw {
    mean: f64,
    sd: f64,
}

impl MultiplierLaw {
    fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            mean: lambda,
            sd: multiplier_variance(lambda).sqrt(),
        })
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (-(self.mean + self.sd * z)).exp2()
    }
}

/// One multiplier `2^(-V)`, `V ~ Normal(lambda, 2(lambda-1)/ln 2)`.
pub fn draw_multiplier<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<f64> {
    Ok(MultiplierLaw::new(lambda)?.sample(rng))
}

/// Multipliers of a depth-`K` binary cascade; `levels[k-1]` has `2^k` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierTree {
    levels: Vec<Vec<f64>>,
}

impl MultiplierTree {
    /// Draws level by level, cells left to right, from a single stream.
    pub fn draw<R: Rng + ?Sized>(lambda: f64, depth: u32, rng: &mut R) -> Result<Self> {
        if depth == 0 || depth > 40 {
            return Err(MmarError::InvalidParameter(format!(
                "cascade depth must be in 1..=40, got {depth}"
            )));
        }
        let law = MultiplierLaw::new(lambda)?;
        let levels = (1..=depth)
            .map(|k| (0..1usize << k).map(|_| law.sample(rng)).collect())
            .collect();
        Ok(Self { levels })
    }

    pub fn from_levels(levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(MmarError::InvalidParameter("empty multiplier tree".into()));
        }
        for (i, level) in levels.iter().enumerate() {
            if level.len() != 1usize << (i + 1) {
                return Err(MmarError::InvalidParameter(format!(
                    "level {} has {} multipliers, expected {}",
                    i + 1,
                    level.len(),
                    1usize << (i + 1)
                )));
            }
            if level.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
                return Err(MmarError::InvalidParameter(format!(
                    "level {} has a non-positive multiplier",
                    i + 1
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn depth(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Product of the multipliers along each leaf's path, leaves left to right.
    pub fn cell_products(&self) -> Vec<f64> {
        let mut products = vec![1.0];
        for level in &self.levels {
            products = level.iter().enumerate().map(|(i, m)| products[i >> 1] * m).collect();
        }
        products
    }

    /// Increments for `len` consecutive leaves starting at leaf `offset`
    /// (0-based), rescaled to sum to `len`.
    pub fn window(&self, offset: usize, len: usize) -> Result<DeformationIncrements> {
        let cells = 1usize << self.depth();
        if len == 0 || offset + len > cells {
            return Err(MmarError::InvalidParameter(format!(
                "window [{offset}, {}) outside {cells} cells",
                offset + len
            )));
        }
        let products = self.cell_products();
        let window = &products[offset..offset + len];
        let mass: f64 = window.iter().sum();
        let scale = len as f64 / mass;
        Ok(DeformationIncrements(window.iter().map(|p| p * scale).collect()))
    }
}

pub(crate) fn dyadic_depth(len: usize) -> Option<u32> {
    len.is_power_of_two().then(|| len.trailing_zeros())
}

/// Smallest `K` with `len < 2^K`.
pub(crate) fn covering_depth(len: usize) -> u32 {
    usize::BITS - len.leading_zeros()
}

/// Cascade for a length that is an exact power of two.
pub fn build_cascade_dyadic(params: &CascadeParams, seed: SeedSpec) -> Result<DeformationIncrements> {
    let depth = dyadic_depth(params.len).ok_or_else(|| {
        MmarError::InvalidParameter(format!(
            "length {} is not a power of two; use build_cascade",
            params.len
        ))
    })?;
    let tree = MultiplierTree::draw(params.lambda, depth, &mut seed.rng(Lane::Multipliers))?;
    tree.window(0, params.len)
}

/// Cascade of any length. Non-dyadic lengths take a uniformly placed window
/// of the smallest covering dyadic cascade and renormalize it.
pub fn build_cascade(params: &CascadeParams, seed: SeedSpec) -> Result<DeformationIncrements> {
    if dyadic_depth(params.len).is_some() {
        return build_cascade_dyadic(params, seed);
    }
    let depth = covering_depth(params.len);
    let tree = MultiplierTree::draw(params.lambda, depth, &mut seed.rng(Lane::Multipliers))?;
    tree.window(window_offset(params.len, seed), params.len)
}

/// Offset that [`build_cascade`] uses for a non-dyadic length.
pub fn window_offset(len: usize, seed: SeedSpec) -> usize {
    if dyadic_depth(len).is_some() {
        return 0;
    }
    let spare = (1usize << covering_depth(len)) - len;
    seed.rng(Lane::Offset).random_range(0..=spare)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Materializes the tree node by node: leaf `t` (1-based) of a depth-`K`
    /// cascade over `2^K` cells sits in level-`k` cell `h` when
    /// `2^-k (h-1) 2^K + 1 <= t <= 2^-k h 2^K`.
    fn oracle_increments(levels: &[Vec<f64>], offset: usize, len: usize) -> Vec<f64> {
        let depth = levels.len();
        let cells = 1usize << depth;
        let mut raw = Vec::with_capacity(len);
        for t in (offset + 1)..=(offset + len) {
            let mut product = 1.0;
            for k in 1..=depth {
                let width = cells >> k;
                let h = (1..=(1usize << k))
                    .find(|h| (h - 1) * width < t && t <= h * width)
                    .unwrap();
                product *= levels[k - 1][h - 1];
            }
            raw.push(product);
        }
        let omega: f64 = raw.iter().sum();
        raw.iter().map(|p| len as f64 * p / omega).collect()
    }

    fn replay_levels(lambda: f64, depth: u32, seed: SeedSpec) -> Vec<Vec<f64>> {
        let mut rng = seed.rng(Lane::Multipliers);
        let mut levels = Vec::new();
        for k in 1..=depth {
            levels.push(
                (0..1usize << k)
                    .map(|_| draw_multiplier(lambda, &mut rng).unwrap())
                    .collect(),
            );
        }
        levels
    }

    #[test]
    fn unit_lambda_multiplier_is_one_half() {
        let mut rng = SeedSpec::new(1, 1).rng(Lane::Multipliers);
        for _ in 0..100 {
            assert_eq!(draw_multiplier(1.0, &mut rng).unwrap(), 0.5);
        }
        assert!(draw_multiplier(0.99, &mut rng).is_err());
    }

    #[test]
    fn multiplier_log_moments() {
        let mut rng = SeedSpec::new(42, 0).rng(Lane::Multipliers);
        let n = 100_000;
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let m = draw_multiplier(1.12, &mut rng).unwrap();
                assert!(m > 0.0);
                -m.log2()
            })
            .collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.12).abs() < 0.01, "mean {mean}");
        assert!((var - 0.24 / std::f64::consts::LN_2).abs() < 0.01, "var {var}");
    }

    #[test]
    fn unit_lambda_gives_unit_increments() {
        let params = CascadeParams::new(1.0, 8).unwrap();
        let d = build_cascade_dyadic(&params, SeedSpec::new(3, 9)).unwrap();
        assert_eq!(d.values(), &[1.0; 8]);
        let params = CascadeParams::new(1.0, 5000).unwrap();
        let d = build_cascade(&params, SeedSpec::new(3, 9)).unwrap();
        assert!(d.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn dyadic_matches_tree_oracle() {
        let seed = SeedSpec::new(2024, 17);
        let params = CascadeParams::new(1.12, 4).unwrap();
        let got = build_cascade_dyadic(&params, seed).unwrap();
        let expected = oracle_increments(&replay_levels(1.12, 2, seed), 0, 4);
        for (g, e) in got.values().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn non_dyadic_matches_tree_oracle() {
        for stream in 0..20 {
            let seed = SeedSpec::new(5, stream);
            let params = CascadeParams::new(1.12, 6).unwrap();
            let got = build_cascade(&params, seed).unwrap();
            let offset = window_offset(6, seed);
            assert!(offset <= 2);
            let expected = oracle_increments(&replay_levels(1.12, 3, seed), offset, 6);
            for (g, e) in got.values().iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn every_window_offset_is_normalized() {
        let tree = MultiplierTree::draw(1.12, 3, &mut SeedSpec::new(8, 8).rng(Lane::Multipliers)).unwrap();
        for offset in 0..=2 {
            let d = tree.window(offset, 6).unwrap();
            let sum: f64 = d.values().iter().sum();
            assert!((sum - 6.0).abs() < 1e-12);
        }
        assert!(tree.window(3, 6).is_err());
    }

    #[test]
    fn depth_helpers() {
        assert_eq!(covering_depth(6), 3);
        assert_eq!(covering_depth(5000), 13);
        assert_eq!(covering_depth(4097), 13);
        assert_eq!(dyadic_depth(4096), Some(12));
        assert_eq!(dyadic_depth(6), None);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CascadeParams::new(0.5, 8).is_err());
        assert!(CascadeParams::new(f64::NAN, 8).is_err());
        assert!(CascadeParams::new(1.1, 1).is_err());
        let p = CascadeParams::new(1.1, 6).unwrap();
        assert!(build_cascade_dyadic(&p, SeedSpec::new(0, 0)).is_err());
    }

    #[test]
    fn common_level_factor_cancels() {
        let tree = MultiplierTree::draw(1.1, 5, &mut SeedSpec::new(4, 2).rng(Lane::Multipliers)).unwrap();
        let factors = [0.3, 2.0, 7.5, 0.01, 1.7];
        let scaled = MultiplierTree::from_levels(
            tree.levels()
                .iter()
                .zip(factors)
                .map(|(level, c)| level.iter().map(|m| m * c).collect())
                .collect(),
        )
        .unwrap();
        let a = tree.window(3, 27).unwrap();
        let b = scaled.window(3, 27).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn heterogeneity_grows_with_lambda() {
        let lambdas = [1.0, 1.04, 1.08, 1.12];
        let mut mean_var = [0.0; 4];
        for stream in 0..100 {
            for (i, &lambda) in lambdas.iter().enumerate() {
                let p = CascadeParams::new(lambda, 1000).unwrap();
                let d = build_cascade(&p, SeedSpec::new(99, stream)).unwrap();
                let v = d.values();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                mean_var[i] += v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            }
        }
        assert!(mean_var.windows(2).all(|w| w[0] <= w[1]), "{mean_var:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mass_is_conserved_and_positive(
            lambda in 1.0f64..1.5,
            len in 2usize..3000,
            stream in 0u64..1000,
        ) {
            let p = CascadeParams::new(lambda, len).unwrap();
            let d = build_cascade(&p, SeedSpec::new(11, stream)).unwrap();
            prop_assert_eq!(d.len(), len);
            let sum: f64 = d.values().iter().sum();
            prop_assert!((sum - len as f64).abs() / (len as f64) < 1e-9);
            prop_assert!(d.values().iter().all(|&x| x > 0.0));
        }
    }
}
