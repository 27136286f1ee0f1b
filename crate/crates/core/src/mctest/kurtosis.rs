use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MmarError, Result};
use crate::longmem::compounded_innovations;
use crate::series::SeedSpec;
use crate::stats::{quantile, sample_kurtosis};

/// Upper 95% one-sided bound on sample kurtosis under cascade-compounded
/// normal returns, and where an observed value falls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KurtosisCheck {
    pub lambda: f64,
    pub len: usize,
    pub reps: usize,
    pub bound: f64,
    pub observed: f64,
    pub within: bool,
}

/// Simulates `reps` series `u_t ~ N(0, dtheta_t)` at `lambda` and compares the
/// observed (non-excess) kurtosis with the 95th percentile of theirs.
pub fn kurtosis_check(lambda: f64, len: usize, reps: usize, observed: f64, master_seed: u64) -> Result<KurtosisCheck> {
    if reps < 20 {
        return Err(MmarError::InvalidParameter(format!(
            "need at least 20 replications, got {reps}"
        )));
    }
    let kurtoses: Vec<f64> = (1..=reps as u64)
        .into_par_iter()
        .map(|r| compounded_innovations(lambda, len, SeedSpec::new(master_seed, r)).map(|u| sample_kurtosis(&u)))
        .collect::<Result<_>>()?;
    let bound = quantile(&kurtoses, 0.95);
    Ok(KurtosisCheck {
        lambda,
        len,
        reps,
        bound,
        observed,
        within: observed <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_bound_flags_fat_tails() {
        let check = kurtosis_check(1.0, 5000, 500, 6.38, 1).unwrap();
        assert!(check.bound > 3.0 && check.bound < 3.3, "{}", check.bound);
        assert!(!check.within);
    }

    #[test]
    fn cascade_raises_the_bound() {
        let gaussian = kurtosis_check(1.0, 5000, 300, 3.0, 2).unwrap();
        let cascade = kurtosis_check(1.12, 5000, 300, 3.0, 2).unwrap();
        assert!(cascade.bound > gaussian.bound);
        assert!(cascade.within);
    }
}
