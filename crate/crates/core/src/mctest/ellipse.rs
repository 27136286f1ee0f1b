//! Confidence ellipses for the joint null `{H = 0.5, lambda = 1}`.
//!
//! The ellipse at significance `p` is the Mahalanobis contour of the cloud,
//! `(x - mu)' S^-1 (x - mu) = c(p)` in `x = (lambda, H)`, with `c(p)` the
//! empirical `(1 - p)` quantile of the cloud's own squared distances. It is
//! carried as the conic
//!
//! ```text
//! g1 lambda^2 + g2 H^2 + g3 lambda H + g4 lambda + g5 H = g0
//! ```
//!
//! normalized to `g1 = 1`, and the rejection region is read off the conic's
//! roots: `H` outside `[H_MIN, H_MAX]`, `lambda` outside
//! `[lambda_MIN, lambda_MAX]`, or `H` below the lower arc `f1(lambda)` or
//! above the upper arc `f2(lambda)`.

use super::cloud::EstimateCloud;
use crate::error::{MmarError, Result};
use crate::stats::quantile_sorted;

/// The joint p-value is searched on `p = 0.999, 0.998, ..., 0.001`.
pub const JOINT_GRID_STEPS: usize = 999;

/// Mean, covariance and sorted squared distances of a cloud: everything
/// needed to produce its ellipse at any level.
#[derive(Debug, Clone)]
pub struct EllipseFamily {
    /// `(lambda, H)`
    center: [f64; 2],
    cov: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
    sorted_d2: Vec<f64>,
}

impl EllipseFamily {
    pub fn fit(cloud: &EstimateCloud) -> Result<Self> {
        let n = cloud.len();
        if n < 3 {
            return Err(MmarError::TooShort { needed: 3, got: n });
        }
        let (mh, ml) = cloud.mean();
        let (mut sll, mut shh, mut slh) = (0.0, 0.0, 0.0);
        for &(h, l) in &cloud.points {
            let (dl, dh) = (l - ml, h - mh);
            sll += dl * dl;
            shh += dh * dh;
            slh += dl * dh;
        }
        let d = (n - 1) as f64;
        let cov = [[sll / d, slh / d], [slh / d, shh / d]];
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(det > 1e-12 * cov[0][0] * cov[1][1]) {
            return Err(MmarError::SingularCovariance(det));
        }
        let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
        let mut family = Self {
            center: [ml, mh],
            cov,
            inv,
            sorted_d2: Vec::new(),
        };
        let mut d2: Vec<f64> = cloud.points.iter().map(|&(h, l)| family.mahalanobis_sq(h, l)).collect();
        d2.sort_by(f64::total_cmp);
        family.sorted_d2 = d2;
        Ok(family)
    }

    /// `(x - mu)' S^-1 (x - mu)` at `x = (lambda, H)`.
    pub fn mahalanobis_sq(&self, h: f64, lambda: f64) -> f64 {
        let dl = lambda - self.center[0];
        let dh = h - self.center[1];
        self.inv[0][0] * dl * dl + 2.0 * self.inv[0][1] * dl * dh + self.inv[1][1] * dh * dh
    }

    /// Contour value `c(p)` holding a `1 - p` share of the cloud.
    pub fn contour_value(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted_d2, 1.0 - p)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.center[0], self.center[1])
    }

    pub fn at_level(&self, p: f64) -> ConicEllipse {
        let c = self.contour_value(p);
        let [[a11, a12], [_, a22]] = self.inv;
        let [ml, mh] = self.center;
        // Expand (x - mu)' A (x - mu) = c and divide through by a11.
        let g1 = a11;
        let g2 = a22;
        let g3 = 2.0 * a12;
        let g4 = -2.0 * (a11 * ml + a12 * mh);
        let g5 = -2.0 * (a22 * mh + a12 * ml);
        let g0 = c - (a11 * ml * ml + 2.0 * a12 * ml * mh + a22 * mh * mh);
        ConicEllipse {
            gamma1: 1.0,
            gamma2: g2 / g1,
            gamma3: g3 / g1,
            gamma4: g4 / g1,
            gamma5: g5 / g1,
            gamma0: g0 / g1,
            p,
            contour: c,
            center: self.center,
            cov: self.cov,
        }
    }

    /// Largest grid `p` whose ellipse does not reject `(h, lambda)`, or 0.
    pub fn joint_pvalue(&self, h: f64, lambda: f64) -> f64 {
        (1..=JOINT_GRID_STEPS)
            .map(|j| (1000 - j) as f64 / 1000.0)
            .find(|&p| !self.at_level(p).rejects(h, lambda))
            .unwrap_or(0.0)
    }
}

/// One fitted ellipse in conic form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicEllipse {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub gamma5: f64,
    pub gamma0: f64,
    pub p: f64,
    /// Squared Mahalanobis radius of the contour.
    pub contour: f64,
    center: [f64; 2],
    cov: [[f64; 2]; 2],
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (r1, r2) = ((-b - s) / (2.0 * a), (-b + s) / (2.0 * a));
    Some((r1.min(r2), r1.max(r2)))
}

impl ConicEllipse {
    /// Left-hand side of the conic at `(lambda, H)`.
    pub fn value(&self, h: f64, lambda: f64) -> f64 {
        self.gamma1 * lambda * lambda
            + self.gamma2 * h * h
            + self.gamma3 * lambda * h
            + self.gamma4 * lambda
            + self.gamma5 * h
    }

    pub fn discriminant(&self) -> f64 {
        self.gamma3 * self.gamma3 - 4.0 * self.gamma1 * self.gamma2
    }

    /// Lower and upper arcs `(f1, f2)` at `lambda`, if the vertical line meets the ellipse.
    pub fn arcs_at(&self, lambda: f64) -> Option<(f64, f64)> {
        let b = self.gamma3 * lambda + self.gamma5;
        let c = self.gamma1 * lambda * lambda + self.gamma4 * lambda - self.gamma0;
        quadratic_roots(self.gamma2, b, c)
    }

    /// Left and right branches in `lambda` at `h`.
    pub fn lambda_branches_at(&self, h: f64) -> Option<(f64, f64)> {
        let b = self.gamma3 * h + self.gamma4;
        let c = self.gamma2 * h * h + self.gamma5 * h - self.gamma0;
        quadratic_roots(self.gamma1, b, c)
    }

    /// `(lambda_MIN, lambda_MAX)`: where the arc discriminant, a concave
    /// quadratic in `lambda`, vanishes.
    pub fn lambda_extent(&self) -> (f64, f64) {
        let (g1, g2, g3, g4, g5, g0) = self.coefficients();
        let a = g3 * g3 - 4.0 * g1 * g2;
        let b = 2.0 * g3 * g5 - 4.0 * g2 * g4;
        let c = g5 * g5 + 4.0 * g2 * g0;
        quadratic_roots(a, b, c).unwrap_or((f64::NAN, f64::NAN))
    }

    /// `(H_MIN, H_MAX)`, from the branch discriminant in `H`.
    pub fn hurst_extent(&self) -> (f64, f64) {
        let (g1, g2, g3, g4, g5, g0) = self.coefficients();
        let a = g3 * g3 - 4.0 * g1 * g2;
        let b = 2.0 * g3 * g4 - 4.0 * g1 * g5;
        let c = g4 * g4 + 4.0 * g1 * g0;
        quadratic_roots(a, b, c).unwrap_or((f64::NAN, f64::NAN))
    }

    /// `lambda_1` and `lambda_2`: where the lower arc bottoms out and the upper arc peaks.
    pub fn arc_extreme_lambdas(&self) -> (f64, f64) {
        let (h_min, h_max) = self.hurst_extent();
        let at = |h: f64| -(self.gamma3 * h + self.gamma4) / (2.0 * self.gamma1);
        (at(h_min), at(h_max))
    }

    fn coefficients(&self) -> (f64, f64, f64, f64, f64, f64) {
        (
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.gamma4,
            self.gamma5,
            self.gamma0,
        )
    }

    /// Whether `(h, lambda)` lies outside the ellipse, decided from the conic geometry.
    pub fn rejects(&self, h: f64, lambda: f64) -> bool {
        let (h_min, h_max) = self.hurst_extent();
        let (l_min, l_max) = self.lambda_extent();
        if !(h >= h_min && h <= h_max && lambda >= l_min && lambda <= l_max) {
            return true;
        }
        // Inside the bounding box the arcs exist up to rounding at the extremes.
        let b = self.gamma3 * lambda + self.gamma5;
        let c = self.gamma1 * lambda * lambda + self.gamma4 * lambda - self.gamma0;
        let disc = (b * b - 4.0 * self.gamma2 * c).max(0.0);
        let s = disc.sqrt();
        let f1 = (-b - s) / (2.0 * self.gamma2);
        let f2 = (-b + s) / (2.0 * self.gamma2);
        h < f1 || h > f2
    }

    /// `count` points evenly spaced in angle around the contour, as `(lambda, H)`.
    pub fn boundary(&self, count: usize) -> Vec<(f64, f64)> {
        let [[s11, s12], [_, s22]] = self.cov;
        // Cholesky factor of the covariance.
        let l11 = s11.sqrt();
        let l21 = s12 / l11;
        let l22 = (s22 - l21 * l21).sqrt();
        let r = self.contour.sqrt();
        (0..count)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / count as f64;
                let (z1, z2) = (r * t.cos(), r * t.sin());
                (self.center[0] + l11 * z1, self.center[1] + l21 * z1 + l22 * z2)
            })
            .collect()
    }
}

pub fn fit_ellipse(cloud: &EstimateCloud, p: f64) -> Result<ConicEllipse> {
    if cloud.len() < 100 {
        return Err(MmarError::TooShort {
            needed: 100,
            got: cloud.len(),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(MmarError::InvalidParameter(format!(
            "significance level must lie in (0, 1), got {p}"
        )));
    }
    Ok(EllipseFamily::fit(cloud)?.at_level(p))
}

/// `pi_{H,lambda}`: the first `p = 1 - 0.001 j` at which the point falls
/// inside the ellipse, or 0 when it is outside all 999.
pub fn joint_test(cloud: &EstimateCloud, h_hat: f64, lambda_hat: f64) -> Result<f64> {
    Ok(EllipseFamily::fit(cloud)?.joint_pvalue(h_hat, lambda_hat))
}
