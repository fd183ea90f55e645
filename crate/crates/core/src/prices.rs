//! Leasing prices: the fixed reservation price, the random per-session
//! on-demand price, and the utility-to-currency scale.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quad;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance of the quadrature fallback for survival integrals.
const SURVIVAL_QUAD_TOL: f64 = 1e-10;

/// Distribution of the on-demand price quoted at each session start.
///
/// The uniform family covers the experiments (a zero-width support is the
/// constant-price case); `Custom` accepts any distribution given its CDF
/// and quantile function, with integrals done numerically.
#[derive(Clone)]
pub enum OnDemandPrice {
    Uniform { lo: f64, hi: f64 },
    Custom {
        cdf: ScalarFn,
        quantile: ScalarFn,
        mean: f64,
        upper: f64,
    },
}

impl fmt::Debug for OnDemandPrice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OnDemandPrice::Uniform { lo, hi } => write!(f, "OnDemandPrice::Uniform[{lo}, {hi}]"),
            OnDemandPrice::Custom { mean, upper, .. } => {
                write!(f, "OnDemandPrice::Custom(mean: {mean}, upper: {upper})")
            }
        }
    }
}

impl OnDemandPrice {
    /// Uniform on `[lo, hi]`; `lo == hi` is the constant price.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "on-demand price support [{lo}, {hi}] must be positive and ordered"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    /// Uniform with the given mean and coefficient of variation; the
    /// support is `[(1 - √3·cv)·mean, (1 + √3·cv)·mean]`.
    pub fn uniform_mean_cv(mean: f64, cv: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mean on-demand price must be positive, got {mean}"
            )));
        }
        if !(cv >= 0.0 && cv.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "price coefficient of variation must be non-negative, got {cv}"
            )));
        }
        let half = 3.0_f64.sqrt() * cv * mean;
        let lo = mean - half;
        if lo <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "price variation cv = {cv} pushes the support down to {lo}; it must stay positive"
            )));
        }
        Ok(Self::Uniform { lo, hi: mean + half })
    }

    /// Arbitrary positive price distribution given its CDF, quantile
    /// function, mean, and an upper support bound for the quadratures.
    pub fn custom(cdf: ScalarFn, quantile: ScalarFn, mean: f64, upper: f64) -> Result<Self> {
        if !(mean > 0.0 && upper >= mean && upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "custom price needs 0 < mean <= upper, got mean {mean}, upper {upper}"
            )));
        }
        Ok(Self::Custom {
            cdf,
            quantile,
            mean,
            upper,
        })
    }

    /// E[c_s].
    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Custom { mean, .. } => *mean,
        }
    }

    /// Standard deviation divided by the mean.
    pub fn cv(&self) -> f64 {
        match self {
            Self::Uniform { lo, hi } => (hi - lo) / (2.0 * 3.0_f64.sqrt()) / self.mean(),
            Self::Custom { cdf, mean, upper, .. } => {
                // E[X^2] = ∫ 2x·(1 - F(x)) dx on the support
                let cdf = cdf.clone();
                let second = quad::integrate(
                    move |x| 2.0 * x * (1.0 - cdf(x)),
                    0.0,
                    *upper,
                    SURVIVAL_QUAD_TOL,
                )
                .unwrap_or(mean * mean);
                (second - mean * mean).max(0.0).sqrt() / mean
            }
        }
    }

    /// P(c_s ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Uniform { lo, hi } => {
                if x < *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            Self::Custom { cdf, .. } => cdf(x).clamp(0.0, 1.0),
        }
    }

    /// Draws one price.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            Self::Uniform { lo, hi } => lo + u * (hi - lo),
            Self::Custom { quantile, .. } => quantile(u),
        }
    }

    /// `∫₀^limit (1 - F(x)) dx`, which equals `E[min(c_s, limit)]`.
    ///
    /// Closed form for the uniform family, adaptive quadrature otherwise;
    /// an infinite limit returns the mean.
    pub fn survival_integral(&self, limit: f64) -> Result<f64> {
        if limit.is_nan() {
            return Err(Error::Domain("survival integral limit is NaN".into()));
        }
        if limit <= 0.0 {
            return Ok(0.0);
        }
        if limit.is_infinite() {
            return Ok(self.mean());
        }
        match self {
            Self::Uniform { lo, hi } => {
                if limit <= *lo {
                    Ok(limit)
                } else if limit >= *hi {
                    Ok(self.mean())
                } else {
                    let d = limit - lo;
                    Ok(lo + d - d * d / (2.0 * (hi - lo)))
                }
            }
            Self::Custom { cdf, upper, .. } => {
                let cut = limit.min(*upper);
                let cdf = cdf.clone();
                quad::integrate(move |x| 1.0 - cdf(x), 0.0, cut, SURVIVAL_QUAD_TOL)
            }
        }
    }
}

/// Market prices and the utility-to-currency conversion for one period.
#[derive(Debug, Clone)]
pub struct PriceModel {
    /// Price per reserved sub-channel for the whole period.
    pub reservation_price: f64,
    /// Currency earned per unit of utility.
    pub utility_scale: f64,
    /// Distribution of the per-session on-demand price.
    pub on_demand: OnDemandPrice,
    /// Largest on-demand request honored when the utility is linear.
    pub sc_cap: f64,
}

impl PriceModel {
    pub const DEFAULT_SC_CAP: f64 = 1024.0;

    pub fn new(reservation_price: f64, utility_scale: f64, on_demand: OnDemandPrice) -> Result<Self> {
        if !(reservation_price > 0.0 && reservation_price.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reservation price must be positive, got {reservation_price}"
            )));
        }
        if !(utility_scale > 0.0 && utility_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "utility scale must be positive, got {utility_scale}"
            )));
        }
        Ok(Self {
            reservation_price,
            utility_scale,
            on_demand,
            sc_cap: Self::DEFAULT_SC_CAP,
        })
    }

    pub fn with_sc_cap(mut self, sc_cap: f64) -> Result<Self> {
        if !(sc_cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sub-channel cap must be positive, got {sc_cap}"
            )));
        }
        self.sc_cap = sc_cap;
        Ok(self)
    }
}
