//! Session traffic statistics: the distribution of the number of users.
//!
//! User positions are always uniform on the cell disk; what varies across
//! experiments is the distribution of the per-session user count.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance for PMF normalization and moment consistency checks.
const PMF_TOL: f64 = 1e-9;

/// Distribution of the per-session user count, supported on `0..=k_max`.
#[derive(Debug, Clone)]
pub struct TrafficModel {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    cv: f64,
}

impl TrafficModel {
    /// Uniform integer user count on `[k_low, k_up]`.
    pub fn uniform(k_low: u32, k_up: u32) -> Result<Self> {
        if k_low > k_up {
            return Err(Error::InvalidParameter(format!(
                "user-count bounds out of order: [{k_low}, {k_up}]"
            )));
        }
        let mut pmf = vec![0.0; k_up as usize + 1];
        let p = 1.0 / (k_up - k_low + 1) as f64;
        for entry in pmf.iter_mut().take(k_up as usize + 1).skip(k_low as usize) {
            *entry = p;
        }
        Self::from_pmf(pmf)
    }

    /// Every session has exactly `k` users.
    pub fn degenerate(k: u32) -> Self {
        let mut pmf = vec![0.0; k as usize + 1];
        pmf[k as usize] = 1.0;
        Self::from_pmf(pmf).expect("degenerate PMF is valid")
    }

    /// General PMF over counts `0..pmf.len()`; must sum to one.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidParameter("empty user-count PMF".into()));
        }
        if pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParameter(
                "user-count PMF entries must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidParameter(format!(
                "user-count PMF sums to {total}, expected 1"
            )));
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let var: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - mean).powi(2) * p)
            .sum();
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        Ok(Self { pmf, cdf, mean, cv })
    }

    /// Uniform integer support chosen to hit a target mean and coefficient
    /// of variation: half-width `round(sqrt(3)·cv·mean)` around the mean.
    ///
    /// The mean must be a non-negative integer so the support stays
    /// symmetric and the mean is preserved exactly.
    pub fn uniform_mean_cv(mean: f64, cv: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0 && (mean - mean.round()).abs() < 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "mean user count must be a non-negative integer, got {mean}"
            )));
        }
        if !(cv.is_finite() && cv >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coefficient of variation must be non-negative, got {cv}"
            )));
        }
        let mean_int = mean.round() as i64;
        let half_width = (3.0_f64.sqrt() * cv * mean).round() as i64;
        let lo = mean_int - half_width;
        let hi = mean_int + half_width;
        if lo < 0 {
            return Err(Error::InvalidParameter(format!(
                "requested variation cv = {cv} needs support [{lo}, {hi}] which goes negative"
            )));
        }
        Self::uniform(lo as u32, hi as u32)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// E[K].
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard deviation over mean, computed from the PMF.
    pub fn cv(&self) -> f64 {
        self.cv
    }

    /// Smallest count with positive probability.
    pub fn k_min(&self) -> usize {
        self.pmf.iter().position(|&p| p > 0.0).unwrap_or(0)
    }

    /// Largest count with positive probability.
    pub fn k_max(&self) -> usize {
        self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// CDF of the user count evaluated at a real argument.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let j = x.floor() as usize;
        if j >= self.cdf.len() {
            1.0
        } else {
            self.cdf[j]
        }
    }

    /// P(K > j).
    pub fn survival_count(&self, j: usize) -> f64 {
        if j >= self.cdf.len() {
            0.0
        } else {
            (1.0 - self.cdf[j]).max(0.0)
        }
    }

    /// Draws a user count by inverse-CDF lookup.
    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.pmf.len() - 1)
    }
}
