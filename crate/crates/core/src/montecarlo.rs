//! Seeded Monte Carlo experiments over periods of sessions.
//!
//! Sessions are evaluated data-parallel with per-session random streams
//! derived from the root seed, so results are identical at any worker
//! count. Compared schemes share the session draws (common random
//! numbers), which sharpens surplus comparisons; aggregation uses pairwise
//! summation in a fixed order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_user_set, ChannelParams};
use crate::dra::{solve_fixed_point, system_utility, ThroughputProfile};
use crate::error::{Error, Result};
use crate::leasing::{
    baseline_reservation_only, evaluate_session, pf_reservation_root, sgd_reservation, SgdOptions,
};
use crate::prices::{OnDemandPrice, PriceModel};
use crate::rng::{substream, StreamKind};
use crate::traffic::TrafficModel;
use crate::utility::UtilitySpec;

/// Leasing scheme under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Advance reservation plus per-session on-demand requests.
    TwoStage,
    /// Reservation only, no recourse within the period.
    ReservationOnly,
    /// No reservation, everything on demand.
    OnDemandOnly,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::TwoStage, Scheme::ReservationOnly, Scheme::OnDemandOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::TwoStage => "two_stage",
            Scheme::ReservationOnly => "reservation_only",
            Scheme::OnDemandOnly => "on_demand_only",
        }
    }
}

/// Precomputed period decisions consumed by [`run_period`].
#[derive(Debug, Clone, Copy)]
pub struct PeriodPlan {
    /// Reservation of the two-stage scheme.
    pub two_stage_reservation: f64,
    /// Reservation of the reservation-only benchmark.
    pub reservation_only: f64,
}

/// Per-scheme session statistics for one period configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SchemeStats {
    pub scheme: Scheme,
    pub n_r: f64,
    pub mean_n_s: f64,
    pub se_n_s: f64,
    pub mean_total_sc: f64,
    /// Mean on-demand spend per session, kept so the cost per sub-channel
    /// can be recomputed from parts.
    pub mean_on_demand_spend: f64,
    pub mean_cost_per_sc: f64,
    /// Expected period surplus per session, reservation cost included.
    pub mean_surplus: f64,
    pub se_surplus: f64,
}

/// Output of one [`run_period`] call.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub sessions: usize,
    pub per_scheme: Vec<SchemeStats>,
}

#[derive(Debug, Clone, Copy, Default)]
struct SessionEval {
    n_s_two: f64,
    spend_two: f64,
    q_two: f64,
    n_s_od: f64,
    spend_od: f64,
    q_od: f64,
    q_ro: f64,
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sample mean and its standard error, pairwise-summed in index order.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let devs: Vec<f64> = values.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&devs) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

fn cost_per_sc(reserved_cost: f64, mean_spend: f64, n_r: f64, mean_n_s: f64) -> f64 {
    let total = n_r + mean_n_s;
    if total > 0.0 {
        (reserved_cost + mean_spend) / total
    } else {
        0.0
    }
}

/// Solves the throughput profiles of sessions `0..sessions` drawn from the
/// per-session traffic streams. The result depends on the traffic model,
/// utility, channel, and seed only, so sweeps over price parameters reuse
/// one bank of profiles across all grid points.
pub fn solve_session_profiles(
    traffic: &TrafficModel,
    u: &UtilitySpec,
    channel: &ChannelParams,
    sessions: usize,
    seed: u64,
) -> Result<Vec<ThroughputProfile>> {
    (0..sessions)
        .into_par_iter()
        .map(|j| {
            let mut traffic_rng = substream(seed, StreamKind::SessionTraffic, j as u64);
            let users = sample_user_set(traffic, &mut traffic_rng);
            if users.is_empty() {
                Ok(ThroughputProfile::empty())
            } else {
                solve_fixed_point(&users, u, channel)
            }
        })
        .collect()
}

/// Evaluates the requested schemes on presolved session profiles, drawing
/// the on-demand price of session `j` from its own price stream.
pub fn run_period_with_profiles(
    u: &UtilitySpec,
    prices: &PriceModel,
    plan: &PeriodPlan,
    schemes: &[Scheme],
    profiles: &[ThroughputProfile],
    seed: u64,
) -> Result<RunStats> {
    let sessions = profiles.len();
    if sessions == 0 {
        return Err(Error::InvalidParameter("session count must be positive".into()));
    }
    if schemes.is_empty() {
        return Err(Error::InvalidParameter("no schemes requested".into()));
    }
    u.require_scale_condition()?;
    let want_two = schemes.contains(&Scheme::TwoStage);
    let want_ro = schemes.contains(&Scheme::ReservationOnly);
    let want_od = schemes.contains(&Scheme::OnDemandOnly);

    let evals: Result<Vec<SessionEval>> = profiles
        .par_iter()
        .enumerate()
        .map(|(j, profile)| {
            let mut price_rng = substream(seed, StreamKind::SessionPrice, j as u64);
            let c_s = prices.on_demand.sample(&mut price_rng);
            let mut eval = SessionEval::default();
            if want_two {
                let outcome =
                    evaluate_session(profile, c_s, plan.two_stage_reservation, u, prices)?;
                eval.n_s_two = outcome.request;
                eval.spend_two = outcome.spend;
                eval.q_two = outcome.surplus;
            }
            if want_od {
                let outcome = evaluate_session(profile, c_s, 0.0, u, prices)?;
                eval.n_s_od = outcome.request;
                eval.spend_od = outcome.spend;
                eval.q_od = outcome.surplus;
            }
            if want_ro {
                eval.q_ro =
                    prices.utility_scale * system_utility(u, profile, plan.reservation_only)?;
            }
            Ok(eval)
        })
        .collect();
    let evals = evals?;

    let c_r = prices.reservation_price;
    let mut per_scheme = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let stats = match scheme {
            Scheme::TwoStage => {
                let n_r = plan.two_stage_reservation;
                let n_s: Vec<f64> = evals.iter().map(|e| e.n_s_two).collect();
                let spend: Vec<f64> = evals.iter().map(|e| e.spend_two).collect();
                let q: Vec<f64> = evals.iter().map(|e| e.q_two).collect();
                let (mean_n_s, se_n_s) = mean_se(&n_s);
                let (mean_spend, _) = mean_se(&spend);
                let (mean_q, se_q) = mean_se(&q);
                SchemeStats {
                    scheme,
                    n_r,
                    mean_n_s,
                    se_n_s,
                    mean_total_sc: n_r + mean_n_s,
                    mean_on_demand_spend: mean_spend,
                    mean_cost_per_sc: cost_per_sc(c_r * n_r, mean_spend, n_r, mean_n_s),
                    mean_surplus: -c_r * n_r + mean_q,
                    se_surplus: se_q,
                }
            }
            Scheme::ReservationOnly => {
                let n_r = plan.reservation_only;
                let q: Vec<f64> = evals.iter().map(|e| e.q_ro).collect();
                let (mean_q, se_q) = mean_se(&q);
                SchemeStats {
                    scheme,
                    n_r,
                    mean_n_s: 0.0,
                    se_n_s: 0.0,
                    mean_total_sc: n_r,
                    mean_on_demand_spend: 0.0,
                    mean_cost_per_sc: if n_r > 0.0 { c_r } else { 0.0 },
                    mean_surplus: -c_r * n_r + mean_q,
                    se_surplus: se_q,
                }
            }
            Scheme::OnDemandOnly => {
                let n_s: Vec<f64> = evals.iter().map(|e| e.n_s_od).collect();
                let spend: Vec<f64> = evals.iter().map(|e| e.spend_od).collect();
                let q: Vec<f64> = evals.iter().map(|e| e.q_od).collect();
                let (mean_n_s, se_n_s) = mean_se(&n_s);
                let (mean_spend, _) = mean_se(&spend);
                let (mean_q, se_q) = mean_se(&q);
                SchemeStats {
                    scheme,
                    n_r: 0.0,
                    mean_n_s,
                    se_n_s,
                    mean_total_sc: mean_n_s,
                    mean_on_demand_spend: mean_spend,
                    mean_cost_per_sc: cost_per_sc(0.0, mean_spend, 0.0, mean_n_s),
                    mean_surplus: mean_q,
                    se_surplus: se_q,
                }
            }
        };
        per_scheme.push(stats);
    }
    Ok(RunStats { sessions, per_scheme })
}

/// Samples sessions, solves their throughput profiles, and evaluates the
/// requested schemes on the shared draws.
pub fn run_period(
    traffic: &TrafficModel,
    u: &UtilitySpec,
    channel: &ChannelParams,
    prices: &PriceModel,
    plan: &PeriodPlan,
    schemes: &[Scheme],
    sessions: usize,
    seed: u64,
) -> Result<RunStats> {
    let profiles = solve_session_profiles(traffic, u, channel, sessions, seed)?;
    run_period_with_profiles(u, prices, plan, schemes, &profiles, seed)
}

/// Decision statistics under proportional fairness, where the on-demand
/// request depends on the session only through the user count and price;
/// no throughput solves are involved.
#[derive(Debug, Clone, Copy)]
pub struct PfDecisionStats {
    pub sessions: usize,
    pub mean_users: f64,
    pub mean_on_demand: f64,
    pub se_on_demand: f64,
    pub mean_spend: f64,
    pub se_spend: f64,
}

/// Samples `sessions` (user count, price) pairs and applies the
/// proportional-fairness request rule at reservation `n_r`.
pub fn pf_decision_stats(
    traffic: &TrafficModel,
    prices: &PriceModel,
    n_r: f64,
    sessions: usize,
    seed: u64,
) -> Result<PfDecisionStats> {
    if sessions == 0 {
        return Err(Error::InvalidParameter("session count must be positive".into()));
    }
    let u_g = prices.utility_scale;
    let mut users = Vec::with_capacity(sessions);
    let mut requests = Vec::with_capacity(sessions);
    let mut spends = Vec::with_capacity(sessions);
    for j in 0..sessions {
        let mut traffic_rng = substream(seed, StreamKind::SessionTraffic, j as u64);
        let mut price_rng = substream(seed, StreamKind::SessionPrice, j as u64);
        let k = traffic.sample_count(&mut traffic_rng) as f64;
        let c_s = prices.on_demand.sample(&mut price_rng);
        let n_s = (u_g * k / c_s - n_r).max(0.0);
        users.push(k);
        requests.push(n_s);
        spends.push(c_s * n_s);
    }
    let (mean_users, _) = mean_se(&users);
    let (mean_on_demand, se_on_demand) = mean_se(&requests);
    let (mean_spend, se_spend) = mean_se(&spends);
    Ok(PfDecisionStats {
        sessions,
        mean_users,
        mean_on_demand,
        se_on_demand,
        mean_spend,
        se_spend,
    })
}

/// Quantity swept across grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Coefficient of variation of the on-demand price.
    CsCv,
    /// Mean of the on-demand price.
    CsMean,
    /// Coefficient of variation of the user count.
    KCv,
    /// Mean user count.
    KMean,
    /// Fairness degree of the utility.
    Alpha,
}

/// A sweep: which variable, which values, and how hard to sample.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub variable: SweepVariable,
    pub points: Vec<f64>,
    pub sessions_per_point: usize,
    pub schemes: Vec<Scheme>,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidParameter("sweep grid has no points".into()));
        }
        if self.points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "sweep points must be distinct and sorted ascending".into(),
            ));
        }
        if self.sessions_per_point == 0 {
            return Err(Error::InvalidParameter("sessions per point must be positive".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidParameter("sweep compares no schemes".into()));
        }
        let mut seen = Vec::new();
        for s in &self.schemes {
            if seen.contains(s) {
                return Err(Error::InvalidParameter(format!(
                    "scheme {} listed twice",
                    s.as_str()
                )));
            }
            seen.push(*s);
        }
        Ok(())
    }
}

/// Base configuration a sweep perturbs point by point.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub traffic: TrafficModel,
    pub utility: UtilitySpec,
    pub channel: ChannelParams,
    pub prices: PriceModel,
    pub sgd: SgdOptions,
    /// Sessions spent estimating the mean utility metric for the
    /// reservation-only benchmark outside proportional fairness.
    pub baseline_estimate_sessions: usize,
}

/// One CSV row of a sweep result.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub n_r: f64,
    pub mean_n_s: f64,
    pub se_n_s: f64,
    pub mean_total_sc: f64,
    pub mean_cost_per_sc: f64,
    pub mean_surplus: f64,
    pub se_surplus: f64,
}

impl SweepRow {
    fn new(sweep_value: f64, stats: &SchemeStats) -> Self {
        Self {
            sweep_value,
            scheme: stats.scheme,
            n_r: stats.n_r,
            mean_n_s: stats.mean_n_s,
            se_n_s: stats.se_n_s,
            mean_total_sc: stats.mean_total_sc,
            mean_cost_per_sc: stats.mean_cost_per_sc,
            mean_surplus: stats.mean_surplus,
            se_surplus: stats.se_surplus,
        }
    }
}

impl SweepBase {
    /// The models in force at one grid point: the swept quantity replaced,
    /// everything else from the base. Fails when a point is unrealizable
    /// (for example a price variation pushing the support non-positive).
    pub fn rebuild(
        &self,
        variable: SweepVariable,
        point: f64,
    ) -> Result<(TrafficModel, UtilitySpec, PriceModel)> {
        let mut traffic = self.traffic.clone();
        let mut utility = self.utility.clone();
        let mut prices = self.prices.clone();
        match variable {
            SweepVariable::CsCv => {
                prices.on_demand =
                    OnDemandPrice::uniform_mean_cv(self.prices.on_demand.mean(), point)?;
            }
            SweepVariable::CsMean => {
                prices.on_demand =
                    OnDemandPrice::uniform_mean_cv(point, self.prices.on_demand.cv())?;
            }
            SweepVariable::KCv => {
                traffic = TrafficModel::uniform_mean_cv(self.traffic.mean(), point)?;
            }
            SweepVariable::KMean => {
                traffic = TrafficModel::uniform_mean_cv(point, self.traffic.cv())?;
            }
            SweepVariable::Alpha => {
                utility = UtilitySpec::alpha_fair(point)?;
            }
        }
        Ok((traffic, utility, prices))
    }
}

/// True when sweeping this variable leaves the session throughput
/// profiles unchanged, so one profile bank serves every grid point.
pub fn shares_session_profiles(variable: SweepVariable) -> bool {
    matches!(variable, SweepVariable::CsCv | SweepVariable::CsMean)
}

/// Recomputes the leasing decisions and session statistics of a single
/// grid point. Session random streams do not depend on the point, so
/// sweeps share draws across points as well as across schemes. A profile
/// bank may be passed for price-only sweep variables.
pub fn sweep_point_with_profiles(
    base: &SweepBase,
    variable: SweepVariable,
    point: f64,
    schemes: &[Scheme],
    sessions: usize,
    seed: u64,
    bank: Option<&[ThroughputProfile]>,
) -> Result<Vec<SweepRow>> {
    if bank.is_some() && !shares_session_profiles(variable) {
        return Err(Error::InvalidParameter(
            "profile bank only applies to price sweep variables".into(),
        ));
    }
    let (traffic, utility, prices) = base.rebuild(variable, point)?;
    let two_stage_reservation = if schemes.contains(&Scheme::TwoStage) {
        if utility.is_proportional_fair() {
            pf_reservation_root(&traffic, &prices)?
        } else {
            sgd_reservation(&traffic, &utility, &base.channel, &prices, &base.sgd, seed)?
                .reservation
        }
    } else {
        0.0
    };
    let reservation_only = if schemes.contains(&Scheme::ReservationOnly) {
        baseline_reservation_only(
            &traffic,
            &utility,
            &base.channel,
            &prices,
            base.baseline_estimate_sessions,
            seed,
        )?
    } else {
        0.0
    };
    let plan = PeriodPlan {
        two_stage_reservation,
        reservation_only,
    };
    let stats = match bank {
        Some(profiles) => {
            if profiles.len() != sessions {
                return Err(Error::InvalidParameter(format!(
                    "profile bank holds {} sessions, point needs {sessions}",
                    profiles.len()
                )));
            }
            run_period_with_profiles(&utility, &prices, &plan, schemes, profiles, seed)?
        }
        None => run_period(
            &traffic,
            &utility,
            &base.channel,
            &prices,
            &plan,
            schemes,
            sessions,
            seed,
        )?,
    };
    Ok(stats
        .per_scheme
        .iter()
        .map(|s| SweepRow::new(point, s))
        .collect())
}

/// [`sweep_point_with_profiles`] without a shared bank.
pub fn sweep_point(
    base: &SweepBase,
    variable: SweepVariable,
    point: f64,
    schemes: &[Scheme],
    sessions: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    sweep_point_with_profiles(base, variable, point, schemes, sessions, seed, None)
}

/// Runs every grid point in order and concatenates the rows.
pub fn sweep(grid: &ExperimentGrid, base: &SweepBase, seed: u64) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let bank = if shares_session_profiles(grid.variable) {
        Some(solve_session_profiles(
            &base.traffic,
            &base.utility,
            &base.channel,
            grid.sessions_per_point,
            seed,
        )?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(grid.points.len() * grid.schemes.len());
    for &point in &grid.points {
        rows.extend(sweep_point_with_profiles(
            base,
            grid.variable,
            point,
            &grid.schemes,
            grid.sessions_per_point,
            seed,
            bank.as_deref(),
        )?);
    }
    Ok(rows)
}
