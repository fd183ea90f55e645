//! Per-session dynamic resource allocation.
//!
//! Scheduling each sub-channel to the user with the largest
//! gradient-weighted instantaneous rate maximizes the session utility; the
//! resulting average throughputs are the unique root of the nonlinear
//! system `r_k = n·Φ_k(r)`. The solver runs a damped Picard iteration and
//! falls back to per-coordinate bisection sweeps (Φ_k is strictly
//! decreasing in `r_k`) when the iteration stalls.

use rand::Rng;
use rand_distr::Exp1;

use crate::channel::{ChannelParams, RateDistribution, UserSet};
use crate::error::{Error, Result};
use crate::quad;
use crate::utility::UtilitySpec;

/// Convergence: max-norm residual at most this factor times the mean rate.
pub const RESIDUAL_TOL_FACTOR: f64 = 1e-8;
/// Iteration budget shared by all solver phases.
const MAX_ITERATIONS: usize = 500;
/// Initial Picard relaxation weight on the new iterate.
const PICARD_DAMPING: f64 = 0.5;
/// Length of the cheap Picard warmup before Newton takes over.
const PICARD_WARMUP: usize = 25;
/// Newton steps allowed before falling back to bisection sweeps.
const NEWTON_LIMIT: usize = 60;
/// Absolute tolerance of each throughput integral.
const PHI_ABS_TOL: f64 = 1e-10;
/// Upper-tail mass discarded when truncating the integration range.
const TRUNCATION_TAIL: f64 = 1e-12;

/// Root of the throughput system for one sub-channel, plus the session
/// utility metric derived from it.
#[derive(Debug, Clone)]
pub struct ThroughputProfile {
    /// Optimal average throughput per user with a single sub-channel.
    pub unit_throughputs: Vec<f64>,
    /// Session utility metric `(1/∇U(1))·Σ r_k·∇U(r_k)`; equals the user
    /// count under proportional fairness.
    pub theta: f64,
    /// Max-norm residual of the returned root.
    pub residual: f64,
    /// Solver iterations spent.
    pub iterations: usize,
}

impl ThroughputProfile {
    /// Profile of an idle session (no users).
    pub fn empty() -> Self {
        Self {
            unit_throughputs: Vec::new(),
            theta: 0.0,
            residual: 0.0,
            iterations: 0,
        }
    }

    pub fn user_count(&self) -> usize {
        self.unit_throughputs.len()
    }
}

/// Root of `r_k = n·Φ_k(r)` for a general sub-channel count, used to check
/// that throughput scales linearly in `n`.
#[derive(Debug, Clone)]
pub struct ScaledSolve {
    pub throughputs: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Winner trace and empirical throughputs of a simulated session.
#[derive(Debug, Clone)]
pub struct AllocationTrace {
    /// Winning user per sub-channel, slot-major: `winners[t·n_sc + i]`.
    pub winners: Vec<u16>,
    pub n_sc: usize,
    pub slots: usize,
    /// Per-user average throughput over the simulated slots.
    pub empirical_throughput: Vec<f64>,
    /// Total rate awarded across all slots and sub-channels.
    pub total_awarded: f64,
}

/// Expected rate kept by user `k` under the gradient-weighted max policy
/// with one sub-channel: the integral of `η·Π_{k'≠k} F_k'(ρ_kk'·η)·f_k(η)`.
pub fn phi(dists: &[RateDistribution], u: &UtilitySpec, rates: &[f64], k: usize) -> Result<f64> {
    if k >= dists.len() || rates.len() != dists.len() {
        return Err(Error::InvalidParameter(format!(
            "user index {k} with {} distributions and {} rates",
            dists.len(),
            rates.len()
        )));
    }
    if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::Domain(
            "throughput iterate must be strictly positive".into(),
        ));
    }
    let grad_k = u.gradient(rates[k]);
    let ratios: Vec<(usize, f64)> = (0..dists.len())
        .filter(|&i| i != k)
        .map(|i| (i, grad_k / u.gradient(rates[i])))
        .collect();
    let cap = dists[k].rate_cap(TRUNCATION_TAIL);
    let dist_k = &dists[k];
    quad::integrate(
        |eta| {
            let mut v = eta * dist_k.pdf(eta);
            for &(i, rho) in &ratios {
                v *= dists[i].cdf(rho * eta);
            }
            v
        },
        0.0,
        cap,
        PHI_ABS_TOL,
    )
}

fn residual_tolerance(rates: &[f64]) -> f64 {
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    RESIDUAL_TOL_FACTOR * mean
}

fn apply_phi(dists: &[RateDistribution], u: &UtilitySpec, rates: &[f64], n: f64) -> Result<Vec<f64>> {
    (0..dists.len())
        .map(|k| phi(dists, u, rates, k).map(|v| n * v))
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Solves the dense linear system `a·x = b` in place by Gaussian
/// elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        if a[col][col].abs() < 1e-300 {
            return None;
        }
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = b[col];
        for c in col + 1..n {
            v -= a[col][c] * b[c];
        }
        b[col] = v / a[col][col];
    }
    Some(b)
}

/// Solves `r = n·Φ(r)`; the warm start defaults to the solo mean rates.
///
/// Three phases, all counted against one iteration budget: a damped Picard
/// warmup with the relaxation weight halved whenever the residual grows
/// (the plain iteration two-cycles when user SNRs are very heterogeneous),
/// then Newton on the log-rates with a finite-difference Jacobian and a
/// backtracking line search, then per-coordinate bisection sweeps as the
/// last resort.
fn solve_system(
    dists: &[RateDistribution],
    u: &UtilitySpec,
    n: f64,
    start: Option<&[f64]>,
) -> Result<(Vec<f64>, f64, usize)> {
    let k_count = dists.len();
    let mut rates: Vec<f64> = match start {
        Some(r) => r.to_vec(),
        None => dists.iter().map(|d| n * d.mean_rate()).collect(),
    };
    if rates.len() != k_count || rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(
            "starting throughputs must be strictly positive, one per user".into(),
        ));
    }
    if k_count == 1 {
        // the competition product is empty: the root is the mean rate
        let root = vec![n * dists[0].mean_rate()];
        let residual = (n * phi(dists, u, &root, 0)? - root[0]).abs();
        return Ok((root, residual, 1));
    }

    let mut iterations = 0usize;

    // Picard warmup
    let mut damping = PICARD_DAMPING;
    let mut previous_residual = f64::INFINITY;
    while iterations < PICARD_WARMUP {
        iterations += 1;
        let images = apply_phi(dists, u, &rates, n)?;
        let residual = max_abs_diff(&rates, &images);
        if residual <= residual_tolerance(&rates) {
            return Ok((rates, residual, iterations));
        }
        if residual > previous_residual {
            damping = (damping * 0.5).max(0.05);
        }
        previous_residual = residual;
        for (r, img) in rates.iter_mut().zip(&images) {
            *r = (1.0 - damping) * *r + damping * img;
        }
    }

    // Newton phase on y = ln r, residual map y ↦ ln(n·Φ(exp y)) - y
    let log_map = |y: &[f64]| -> Result<Vec<f64>> {
        let r: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let images = apply_phi(dists, u, &r, n)?;
        Ok(images
            .iter()
            .zip(&r)
            .map(|(img, rv)| (img / rv).ln())
            .collect())
    };
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut y: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
    let mut f = log_map(&y)?;
    let newton_cap = iterations + NEWTON_LIMIT;
    while iterations < newton_cap {
        iterations += 1;
        let r: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let images = apply_phi(dists, u, &r, n)?;
        let residual = max_abs_diff(&r, &images);
        if residual <= residual_tolerance(&r) {
            return Ok((r, residual, iterations));
        }
        let h = 1e-6;
        let mut jacobian = vec![vec![0.0; k_count]; k_count];
        for j in 0..k_count {
            let mut perturbed = y.clone();
            perturbed[j] += h;
            let fp = log_map(&perturbed)?;
            for i in 0..k_count {
                jacobian[i][j] = (fp[i] - f[i]) / h;
            }
        }
        let Some(step) = solve_dense(jacobian, f.iter().map(|v| -v).collect()) else {
            break;
        };
        let f_norm = norm2(&f);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let ft = log_map(&trial)?;
            if norm2(&ft) < (1.0 - 1e-4 * t) * f_norm {
                y = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    rates = y.iter().map(|v| v.exp()).collect();

    // Bisection sweeps on the monotone per-user equations.
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for k in 0..k_count {
            let cap = n * dists[k].mean_rate();
            let mut lo = cap * 1e-12;
            let mut hi = cap;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                rates[k] = mid;
                let image = n * phi(dists, u, &rates, k)?;
                if image > mid {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            rates[k] = 0.5 * (lo + hi);
        }
        let images = apply_phi(dists, u, &rates, n)?;
        let residual = max_abs_diff(&rates, &images);
        if residual <= residual_tolerance(&rates) {
            return Ok((rates, residual, iterations));
        }
    }

    let images = apply_phi(dists, u, &rates, n)?;
    let residual = max_abs_diff(&rates, &images);
    Err(Error::Convergence {
        iterations,
        residual,
        tolerance: residual_tolerance(&rates),
        iterate: rates,
    })
}

/// Session utility metric from the unit throughputs.
pub fn theta_metric(u: &UtilitySpec, unit_throughputs: &[f64]) -> f64 {
    let grad_at_one = u.gradient(1.0);
    unit_throughputs
        .iter()
        .map(|&r| r * u.gradient(r))
        .sum::<f64>()
        / grad_at_one
}

/// Solves the single-sub-channel throughput system for a session.
pub fn solve_fixed_point(
    users: &UserSet,
    u: &UtilitySpec,
    channel: &ChannelParams,
) -> Result<ThroughputProfile> {
    if users.is_empty() {
        return Err(Error::Domain(
            "throughput system is defined for non-empty user sets".into(),
        ));
    }
    let dists = users.rate_distributions(channel)?;
    let (rates, residual, iterations) = solve_system(&dists, u, 1.0, None)?;
    let theta = theta_metric(u, &rates);
    Ok(ThroughputProfile {
        unit_throughputs: rates,
        theta,
        residual,
        iterations,
    })
}

/// Same as [`solve_fixed_point`] but started from an explicit positive
/// throughput vector, for checking that restarts land on the same root.
pub fn solve_fixed_point_from(
    users: &UserSet,
    u: &UtilitySpec,
    channel: &ChannelParams,
    start: &[f64],
) -> Result<ThroughputProfile> {
    if users.is_empty() {
        return Err(Error::Domain(
            "throughput system is defined for non-empty user sets".into(),
        ));
    }
    let dists = users.rate_distributions(channel)?;
    let (rates, residual, iterations) = solve_system(&dists, u, 1.0, Some(start))?;
    let theta = theta_metric(u, &rates);
    Ok(ThroughputProfile {
        unit_throughputs: rates,
        theta,
        residual,
        iterations,
    })
}

/// Solves `r = n·Φ(r)` directly for a given sub-channel count.
pub fn solve_fixed_point_scaled(
    users: &UserSet,
    u: &UtilitySpec,
    channel: &ChannelParams,
    n: f64,
) -> Result<ScaledSolve> {
    if users.is_empty() {
        return Err(Error::Domain(
            "throughput system is defined for non-empty user sets".into(),
        ));
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain(format!(
            "sub-channel count must be positive, got {n}"
        )));
    }
    let dists = users.rate_distributions(channel)?;
    let (throughputs, residual, iterations) = solve_system(&dists, u, n, None)?;
    Ok(ScaledSolve {
        throughputs,
        residual,
        iterations,
    })
}

/// Picks the winning user of every sub-channel in one slot: the argmax of
/// `∇U(r_k)·b_ki`, ties to the lowest index. The scale condition makes the
/// unit-profile weights valid for any total sub-channel count.
pub fn allocate_slot(
    u: &UtilitySpec,
    profile: &ThroughputProfile,
    slot_rates: &[Vec<f64>],
) -> Result<Vec<usize>> {
    let k_count = profile.user_count();
    if slot_rates.len() != k_count || k_count == 0 {
        return Err(Error::InvalidParameter(format!(
            "slot rates for {} users, profile has {}",
            slot_rates.len(),
            k_count
        )));
    }
    let n_sc = slot_rates[0].len();
    if slot_rates.iter().any(|row| row.len() != n_sc) {
        return Err(Error::InvalidParameter(
            "ragged slot-rate matrix".into(),
        ));
    }
    let weights: Vec<f64> = profile
        .unit_throughputs
        .iter()
        .map(|&r| u.gradient(r))
        .collect();
    let mut winners = Vec::with_capacity(n_sc);
    for i in 0..n_sc {
        let mut best = 0usize;
        let mut best_value = weights[0] * slot_rates[0][i];
        for (k, row) in slot_rates.iter().enumerate().skip(1) {
            let value = weights[k] * row[i];
            if value > best_value {
                best = k;
                best_value = value;
            }
        }
        winners.push(best);
    }
    Ok(winners)
}

/// Simulates a session slot-by-slot: i.i.d. Rayleigh gains per user and
/// sub-channel, scheduled with the gradient-weighted max policy.
pub fn simulate_session<R: Rng + ?Sized>(
    users: &UserSet,
    u: &UtilitySpec,
    channel: &ChannelParams,
    n_sc: usize,
    slots: usize,
    rng: &mut R,
) -> Result<AllocationTrace> {
    if slots == 0 {
        return Err(Error::InvalidParameter("slot count must be positive".into()));
    }
    let profile = solve_fixed_point(users, u, channel)?;
    let k_count = profile.user_count();
    if k_count > u16::MAX as usize {
        return Err(Error::InvalidParameter("too many users to trace".into()));
    }
    let dists = users.rate_distributions(channel)?;
    let weights: Vec<f64> = profile
        .unit_throughputs
        .iter()
        .map(|&r| u.gradient(r))
        .collect();

    let mut winners = Vec::with_capacity(slots * n_sc);
    let mut per_user = vec![0.0f64; k_count];
    let mut total_awarded = 0.0f64;
    let mut slot_rates = vec![0.0f64; k_count * n_sc];

    for _ in 0..slots {
        for (k, dist) in dists.iter().enumerate() {
            for i in 0..n_sc {
                let gain: f64 = rng.sample(Exp1);
                slot_rates[k * n_sc + i] = dist.rate_from_gain(gain);
            }
        }
        for i in 0..n_sc {
            let mut best = 0usize;
            let mut best_value = weights[0] * slot_rates[i];
            for k in 1..k_count {
                let value = weights[k] * slot_rates[k * n_sc + i];
                if value > best_value {
                    best = k;
                    best_value = value;
                }
            }
            let awarded = slot_rates[best * n_sc + i];
            per_user[best] += awarded;
            total_awarded += awarded;
            winners.push(best as u16);
        }
    }

    let inv_slots = 1.0 / slots as f64;
    Ok(AllocationTrace {
        winners,
        n_sc,
        slots,
        empirical_throughput: per_user.iter().map(|&x| x * inv_slots).collect(),
        total_awarded,
    })
}

/// Total session utility from `n` sub-channels: `Σ U(n·r_k)`; zero for an
/// idle session.
pub fn system_utility(u: &UtilitySpec, profile: &ThroughputProfile, n: f64) -> Result<f64> {
    if profile.user_count() == 0 {
        return Ok(0.0);
    }
    if !(n >= 0.0 && n.is_finite()) {
        return Err(Error::Domain(format!(
            "sub-channel count must be non-negative, got {n}"
        )));
    }
    let total: f64 = profile
        .unit_throughputs
        .iter()
        .map(|&r| u.value(n * r))
        .sum();
    if !total.is_finite() {
        return Err(Error::Domain(format!(
            "utility diverges for {} users on {n} sub-channels",
            profile.user_count()
        )));
    }
    Ok(total)
}
