//! Utility functions and the gradient scale condition.
//!
//! The leasing layer relies on throughput scaling linearly with the number
//! of sub-channels, which holds exactly when the utility gradient satisfies
//! `∇U(r1)/∇U(r2) = ∇U(r1/n)/∇U(r2/n)` for all positive rates and integer
//! `n`. The alpha-fair family satisfies it; arbitrary concave utilities do
//! not, so custom utilities are checked before they are accepted.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative tolerance for gradient/inverse round trips and the scale check.
pub const ROUND_TRIP_TOL: f64 = 1e-9;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Family {
    AlphaFair { alpha: f64 },
    Custom {
        value: ScalarFn,
        gradient: ScalarFn,
        gradient_inverse: ScalarFn,
    },
}

/// A concave increasing utility with evaluable gradient and inverse gradient.
#[derive(Clone)]
pub struct UtilitySpec {
    family: Family,
    scale_condition: bool,
}

impl fmt::Debug for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::AlphaFair { alpha } => write!(f, "UtilitySpec::alpha_fair({alpha})"),
            Family::Custom { .. } => write!(
                f,
                "UtilitySpec::custom(scale_condition: {})",
                self.scale_condition
            ),
        }
    }
}

impl UtilitySpec {
    /// The alpha-fair family: `r^(1-a)/(1-a)` for `a != 1`, `log r` for `a = 1`.
    ///
    /// `alpha = 0` is plain throughput, `alpha = 1` proportional fairness,
    /// `alpha = 2` penalizes delay.
    pub fn alpha_fair(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "fairness degree must be finite and non-negative, got {alpha}"
            )));
        }
        Ok(Self {
            family: Family::AlphaFair { alpha },
            scale_condition: true,
        })
    }

    /// A caller-supplied utility; rejected unless it passes the scale check.
    pub fn custom(value: ScalarFn, gradient: ScalarFn, gradient_inverse: ScalarFn) -> Result<Self> {
        let spec = Self::custom_unchecked(value, gradient, gradient_inverse);
        if !spec.scale_condition {
            return Err(Error::ScaleCondition);
        }
        Ok(spec)
    }

    /// Builds a custom utility without rejecting scale-condition failures;
    /// the flag records the check result so callers can report it.
    pub fn custom_unchecked(
        value: ScalarFn,
        gradient: ScalarFn,
        gradient_inverse: ScalarFn,
    ) -> Self {
        let mut spec = Self {
            family: Family::Custom {
                value,
                gradient,
                gradient_inverse,
            },
            scale_condition: false,
        };
        spec.scale_condition = check_scale_condition(&spec, &default_scale_grid());
        spec
    }

    /// U(r).
    pub fn value(&self, rate: f64) -> f64 {
        match &self.family {
            Family::AlphaFair { alpha } => {
                if *alpha == 1.0 {
                    rate.ln()
                } else {
                    rate.powf(1.0 - alpha) / (1.0 - alpha)
                }
            }
            Family::Custom { value, .. } => value(rate),
        }
    }

    /// dU/dr evaluated at `rate`.
    pub fn gradient(&self, rate: f64) -> f64 {
        match &self.family {
            Family::AlphaFair { alpha } => rate.powf(-alpha),
            Family::Custom { gradient, .. } => gradient(rate),
        }
    }

    /// Solves `∇U(r) = y` for `r`; unavailable for the linear utility.
    pub fn gradient_inverse(&self, y: f64) -> Result<f64> {
        match &self.family {
            Family::AlphaFair { alpha } => {
                if *alpha == 0.0 {
                    Err(Error::NoGradientInverse)
                } else {
                    Ok(y.powf(-1.0 / alpha))
                }
            }
            Family::Custom {
                gradient_inverse, ..
            } => Ok(gradient_inverse(y)),
        }
    }

    /// Fairness degree, when this is an alpha-fair utility.
    pub fn alpha(&self) -> Option<f64> {
        match &self.family {
            Family::AlphaFair { alpha } => Some(*alpha),
            Family::Custom { .. } => None,
        }
    }

    /// True for `alpha = 1` (logarithmic utility).
    pub fn is_proportional_fair(&self) -> bool {
        self.alpha() == Some(1.0)
    }

    /// True for `alpha = 0`, where the gradient is constant.
    pub fn is_linear(&self) -> bool {
        self.alpha() == Some(0.0)
    }

    /// Whether the gradient scale condition held on the check grid.
    pub fn satisfies_scale_condition(&self) -> bool {
        self.scale_condition
    }

    /// Errors unless the scale condition holds; gate for the leasing layer.
    pub fn require_scale_condition(&self) -> Result<()> {
        if self.scale_condition {
            Ok(())
        } else {
            Err(Error::ScaleCondition)
        }
    }
}

/// Grid used when custom utilities are screened at construction.
pub fn default_scale_grid() -> Vec<(f64, f64, u32)> {
    let rates = [1e-3, 0.037, 0.5, 1.0, 3.7, 42.0, 1e3];
    let divisors = [2u32, 3, 5, 10];
    let mut grid = Vec::new();
    for &r1 in &rates {
        for &r2 in &rates {
            if r1 == r2 {
                continue;
            }
            for &n in &divisors {
                grid.push((r1, r2, n));
            }
        }
    }
    grid
}

/// Checks `∇U(r1)/∇U(r2) = ∇U(r1/n)/∇U(r2/n)` on every grid entry.
pub fn check_scale_condition(u: &UtilitySpec, grid: &[(f64, f64, u32)]) -> bool {
    grid.iter().all(|&(r1, r2, n)| {
        if !(r1 > 0.0 && r2 > 0.0 && n > 0) {
            return false;
        }
        let n = n as f64;
        let whole = u.gradient(r1) / u.gradient(r2);
        let scaled = u.gradient(r1 / n) / u.gradient(r2 / n);
        let denom = whole.abs().max(scaled.abs()).max(f64::MIN_POSITIVE);
        (whole - scaled).abs() <= ROUND_TRIP_TOL * denom
    })
}
