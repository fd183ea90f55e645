//! The two-stage leasing optimizer.
//!
//! Stage two (per session) has a closed form: request up to the point where
//! the marginal utility income matches the quoted price. Stage one (per
//! period) maximizes a concave expected surplus whose gradient is available
//! per sampled session, solved by projected SGD with a `1/√l` step. Under
//! proportional fairness both stages collapse to expressions in the user
//! count alone, and the reservation is the root of a one-dimensional
//! equation solved by bisection.

use serde::Serialize;

use crate::channel::{sample_user_set, ChannelParams};
use crate::dra::{solve_fixed_point, system_utility, ThroughputProfile};
use crate::error::{Error, Result};
use crate::prices::PriceModel;
use crate::rng::{substream, StreamKind};
use crate::traffic::TrafficModel;
use crate::utility::UtilitySpec;

/// Tolerance used when the surplus recomposition is cross-checked.
pub const SURPLUS_RECOMP_TOL: f64 = 1e-9;

/// Optimal number of sub-channels to request on demand for a session with
/// utility metric `theta`, quoted price `c_s`, and `n_r` already reserved.
///
/// `max(∇U⁻¹(c_s/(u_g·theta)) - n_r, 0)`; an idle session requests nothing.
/// For the linear utility the marginal tradeoff is constant, so the request
/// is everything up to the cap when profitable and zero otherwise.
pub fn optimal_on_demand(
    theta: f64,
    c_s: f64,
    n_r: f64,
    u: &UtilitySpec,
    prices: &PriceModel,
) -> Result<f64> {
    u.require_scale_condition()?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("utility metric must be non-negative, got {theta}")));
    }
    if !(c_s > 0.0 && c_s.is_finite()) {
        return Err(Error::Domain(format!("on-demand price must be positive, got {c_s}")));
    }
    if !(n_r >= 0.0) {
        return Err(Error::Domain(format!("reservation must be non-negative, got {n_r}")));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    if u.is_linear() {
        return Ok(if c_s < prices.utility_scale * theta {
            (prices.sc_cap - n_r).max(0.0)
        } else {
            0.0
        });
    }
    let target = u.gradient_inverse(c_s / (prices.utility_scale * theta))?;
    Ok((target - n_r).max(0.0))
}

/// Surplus of one session at the optimal on-demand request, using the
/// continuous request as the integer approximation.
pub fn session_surplus(
    profile: &ThroughputProfile,
    c_s: f64,
    n_r: f64,
    u: &UtilitySpec,
    prices: &PriceModel,
) -> Result<f64> {
    u.require_scale_condition()?;
    if profile.user_count() == 0 {
        return Ok(0.0);
    }
    if !(c_s > 0.0 && c_s.is_finite()) {
        return Err(Error::Domain(format!("on-demand price must be positive, got {c_s}")));
    }
    if !(n_r >= 0.0) {
        return Err(Error::Domain(format!("reservation must be non-negative, got {n_r}")));
    }
    let u_g = prices.utility_scale;
    let theta = profile.theta;
    if u.is_linear() {
        let n_s = optimal_on_demand(theta, c_s, n_r, u, prices)?;
        return Ok(-c_s * n_s + u_g * system_utility(u, profile, n_r + n_s)?);
    }
    if c_s > u_g * theta * u.gradient(n_r) {
        // the reservation already covers the session
        Ok(u_g * system_utility(u, profile, n_r)?)
    } else {
        let target = u.gradient_inverse(c_s / (u_g * theta))?;
        Ok(c_s * (n_r - target) + u_g * system_utility(u, profile, target)?)
    }
}

/// Everything decided and earned in one session.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SessionOutcome {
    /// Session utility metric of the realized user set.
    pub theta: f64,
    /// Quoted on-demand price.
    pub price: f64,
    /// Sub-channels requested on demand.
    pub request: f64,
    /// Session surplus at the optimal request.
    pub surplus: f64,
    /// On-demand spend, `price · request`.
    pub spend: f64,
}

/// Applies the on-demand stage to one session: optimal request, surplus,
/// and spend. An idle session yields all zeros.
pub fn evaluate_session(
    profile: &ThroughputProfile,
    c_s: f64,
    n_r: f64,
    u: &UtilitySpec,
    prices: &PriceModel,
) -> Result<SessionOutcome> {
    let request = if profile.user_count() == 0 {
        0.0
    } else {
        optimal_on_demand(profile.theta, c_s, n_r, u, prices)?
    };
    let surplus = session_surplus(profile, c_s, n_r, u, prices)?;
    Ok(SessionOutcome {
        theta: profile.theta,
        price: c_s,
        request,
        surplus,
        spend: c_s * request,
    })
}

/// One-sample gradient of the period surplus in the reservation size:
/// `-c_r + ∫₀^{u_g·theta·∇U(n_r)} (1 - F_cs)`.
pub fn sample_gradient(theta: f64, n_r: f64, u: &UtilitySpec, prices: &PriceModel) -> Result<f64> {
    u.require_scale_condition()?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("utility metric must be non-negative, got {theta}")));
    }
    if !(n_r >= 0.0) {
        return Err(Error::Domain(format!("reservation must be non-negative, got {n_r}")));
    }
    if theta == 0.0 {
        return Ok(-prices.reservation_price);
    }
    let limit = prices.utility_scale * theta * u.gradient(n_r);
    Ok(-prices.reservation_price + prices.on_demand.survival_integral(limit)?)
}

/// How the reservation in a [`LeasePlan`] was determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReservationMethod {
    /// Projected stochastic gradient descent over sampled sessions.
    Sgd,
    /// Bisection on the proportional-fairness reservation equation.
    PfRoot,
    /// The mean on-demand price does not exceed the reservation price, so
    /// reserving is never worthwhile.
    NoReservation,
}

/// One SGD update: the iterate it started from, the sampled gradient, and
/// the step size applied.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SgdStep {
    pub iteration: usize,
    pub reservation: f64,
    pub gradient: f64,
    pub step_size: f64,
}

/// The period-level leasing decision plus solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct LeasePlan {
    /// Continuous reservation size.
    pub reservation: f64,
    /// Rounded reservation actually purchasable.
    pub reservation_rounded: u64,
    pub method: ReservationMethod,
    pub iterations: usize,
    /// Mean sampled gradient at the returned reservation, when estimated;
    /// near zero at an interior optimum.
    pub final_gradient_estimate: Option<f64>,
    /// Iterate history of the SGD run; empty for the analytic paths.
    #[serde(skip)]
    pub trace: Vec<SgdStep>,
}

impl LeasePlan {
    fn analytic(reservation: f64, method: ReservationMethod) -> Self {
        Self {
            reservation,
            reservation_rounded: reservation.round() as u64,
            method,
            iterations: 0,
            final_gradient_estimate: None,
            trace: Vec::new(),
        }
    }
}

/// Knobs of the reservation SGD.
#[derive(Debug, Clone)]
pub struct SgdOptions {
    /// Number of iterates averaged into the answer.
    pub iterations: usize,
    /// Multiplier on the `1/√l` step schedule.
    pub step_scale: f64,
    /// Starting reservation; defaults to `u_g·E[K]/E[c_s]`.
    pub initial: Option<f64>,
    /// Use the user count as the utility metric under proportional
    /// fairness instead of solving the throughput system per sample.
    pub pf_fast_path: bool,
    /// Fresh samples spent estimating the gradient at the returned point;
    /// zero skips the estimate.
    pub gradient_check_samples: usize,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            // the period objective is flat near its maximum; unit steps
            // leave a long transient in the averaged iterate
            step_scale: 5.0,
            initial: None,
            pf_fast_path: true,
            gradient_check_samples: 200,
        }
    }
}

fn sample_theta(
    traffic: &TrafficModel,
    u: &UtilitySpec,
    channel: &ChannelParams,
    pf_fast: bool,
    seed: u64,
    index: u64,
) -> Result<f64> {
    let mut rng = substream(seed, StreamKind::SgdSample, index);
    let users = sample_user_set(traffic, &mut rng);
    if users.is_empty() {
        return Ok(0.0);
    }
    if pf_fast {
        return Ok(users.count() as f64);
    }
    Ok(solve_fixed_point(&users, u, channel)?.theta)
}

/// Advance-reservation SGD: projected ascent on sampled session gradients
/// with step `step_scale/√l`, returning the running average of the
/// iterates. Short-circuits to zero when reserving cannot beat on-demand
/// prices on average.
pub fn sgd_reservation(
    traffic: &TrafficModel,
    u: &UtilitySpec,
    channel: &ChannelParams,
    prices: &PriceModel,
    opts: &SgdOptions,
    seed: u64,
) -> Result<LeasePlan> {
    u.require_scale_condition()?;
    if opts.iterations == 0 {
        return Err(Error::InvalidParameter("SGD needs at least one iteration".into()));
    }
    if prices.on_demand.mean() <= prices.reservation_price {
        return Ok(LeasePlan::analytic(0.0, ReservationMethod::NoReservation));
    }
    let pf_fast = opts.pf_fast_path && u.is_proportional_fair();
    let mut current = opts
        .initial
        .unwrap_or(prices.utility_scale * traffic.mean() / prices.on_demand.mean())
        .max(0.0);
    let mut sum = current;
    let mut trace = Vec::with_capacity(opts.iterations.saturating_sub(1));
    for l in 1..opts.iterations {
        let theta = sample_theta(traffic, u, channel, pf_fast, seed, l as u64)?;
        let gradient = sample_gradient(theta, current, u, prices)?;
        let step_size = opts.step_scale / (l as f64).sqrt();
        trace.push(SgdStep {
            iteration: l,
            reservation: current,
            gradient,
            step_size,
        });
        current = (current + step_size * gradient).max(0.0);
        sum += current;
    }
    let reservation = sum / opts.iterations as f64;

    let final_gradient_estimate = if opts.gradient_check_samples > 0 {
        let mut acc = 0.0;
        for j in 0..opts.gradient_check_samples {
            let theta = sample_theta(
                traffic,
                u,
                channel,
                pf_fast,
                seed,
                opts.iterations as u64 + j as u64,
            )?;
            acc += sample_gradient(theta, reservation, u, prices)?;
        }
        Some(acc / opts.gradient_check_samples as f64)
    } else {
        None
    };

    Ok(LeasePlan {
        reservation,
        reservation_rounded: reservation.round() as u64,
        method: ReservationMethod::Sgd,
        iterations: opts.iterations,
        final_gradient_estimate,
        trace,
    })
}

/// Right-hand side of the proportional-fairness reservation equation:
/// `E[min(c_s·n, u_g·K)]`, exact given the count PMF and the price
/// survival integral.
fn pf_covered_spend(traffic: &TrafficModel, prices: &PriceModel, n: f64) -> Result<f64> {
    let u_g = prices.utility_scale;
    let mut total = 0.0;
    for j in 0..traffic.k_max() {
        let tail = traffic.survival_count(j);
        if tail == 0.0 {
            continue;
        }
        let above = prices.on_demand.survival_integral(u_g * (j + 1) as f64 / n)?;
        let below = prices.on_demand.survival_integral(u_g * j as f64 / n)?;
        total += tail * n * (above - below);
    }
    Ok(total)
}

/// Optimal reservation under proportional fairness: the unique positive
/// root of `c_r·n = E[min(c_s·n, u_g·K)]`, found by bisection. Depends on
/// the user-count distribution only, never on locations.
pub fn pf_reservation_root(traffic: &TrafficModel, prices: &PriceModel) -> Result<f64> {
    if prices.on_demand.mean() <= prices.reservation_price {
        return Ok(0.0);
    }
    if traffic.k_max() == 0 {
        return Ok(0.0);
    }
    let c_r = prices.reservation_price;
    let balance = |n: f64| -> Result<f64> { Ok(pf_covered_spend(traffic, prices, n)? - c_r * n) };

    let mut lo = 1e-6;
    let mut hi = prices.utility_scale * traffic.k_max() as f64 / c_r;
    let f_lo = balance(lo)?;
    if f_lo <= 0.0 {
        // expected marginal value below the reservation price from the start
        return Ok(0.0);
    }
    let f_hi = balance(hi)?;
    if f_hi.abs() <= 1e-9 * c_r * hi {
        return Ok(hi);
    }
    if f_hi > 0.0 {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Wraps [`pf_reservation_root`] into a [`LeasePlan`], distinguishing a
/// price-dominated zero from a genuine interior root.
pub fn pf_reservation_plan(traffic: &TrafficModel, prices: &PriceModel) -> Result<LeasePlan> {
    if prices.on_demand.mean() <= prices.reservation_price {
        return Ok(LeasePlan::analytic(0.0, ReservationMethod::NoReservation));
    }
    let root = pf_reservation_root(traffic, prices)?;
    Ok(LeasePlan::analytic(root, ReservationMethod::PfRoot))
}

/// One-stage benchmark: reserve for the whole period with no on-demand
/// recourse, sized by the mean utility metric. The metric mean is exact
/// under proportional fairness and Monte Carlo estimated otherwise.
pub fn baseline_reservation_only(
    traffic: &TrafficModel,
    u: &UtilitySpec,
    channel: &ChannelParams,
    prices: &PriceModel,
    estimate_sessions: usize,
    seed: u64,
) -> Result<f64> {
    u.require_scale_condition()?;
    if u.is_linear() {
        return Err(Error::NoGradientInverse);
    }
    let mean_theta = if u.is_proportional_fair() {
        traffic.mean()
    } else {
        if estimate_sessions == 0 {
            return Err(Error::InvalidParameter(
                "metric estimation needs at least one session".into(),
            ));
        }
        use rayon::prelude::*;
        let thetas: Result<Vec<f64>> = (0..estimate_sessions)
            .into_par_iter()
            .map(|j| {
                let mut rng = substream(seed, StreamKind::BaselineEstimate, j as u64);
                let users = sample_user_set(traffic, &mut rng);
                if users.is_empty() {
                    Ok(0.0)
                } else {
                    Ok(solve_fixed_point(&users, u, channel)?.theta)
                }
            })
            .collect();
        let thetas = thetas?;
        thetas.iter().sum::<f64>() / estimate_sessions as f64
    };
    if mean_theta <= 0.0 {
        return Ok(0.0);
    }
    u.gradient_inverse(prices.reservation_price / (prices.utility_scale * mean_theta))
}

/// One-stage benchmark: no reservation, everything on demand. Identical to
/// the on-demand stage with zero reserved sub-channels.
pub fn baseline_on_demand_only(
    theta: f64,
    c_s: f64,
    u: &UtilitySpec,
    prices: &PriceModel,
) -> Result<f64> {
    optimal_on_demand(theta, c_s, 0.0, u, prices)
}
