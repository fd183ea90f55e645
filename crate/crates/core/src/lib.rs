//! Two-stage spectrum leasing for a virtual mobile operator.
//!
//! A virtual operator leases OFDMA sub-channels from a network owner in two
//! stages — a period-long advance reservation plus per-session on-demand
//! requests — and schedules the acquired sub-channels across its users
//! slot-by-slot according to fast fading. This crate provides:
//!
//! - the channel model and per-user rate distributions ([`channel`]),
//! - alpha-fair utilities and the gradient scale condition ([`utility`]),
//! - the per-session throughput fixed point and the slot-level allocation
//!   policy with its simulator ([`dra`]),
//! - closed-form on-demand requests, the reservation SGD, the proportional
//!   fairness fast paths, and one-stage baselines ([`leasing`]),
//! - a seeded Monte Carlo experiment engine with common random numbers
//!   across compared schemes ([`montecarlo`]).

pub mod channel;
pub mod dra;
pub mod error;
pub mod leasing;
pub mod montecarlo;
pub mod prices;
pub mod quad;
pub mod rng;
pub mod traffic;
pub mod utility;

pub use channel::{
    instantaneous_rate, rate_distribution, sample_user_set, ChannelParams, RateDistribution,
    UserSet,
};
pub use dra::{
    allocate_slot, phi, simulate_session, solve_fixed_point, solve_fixed_point_from,
    solve_fixed_point_scaled,
    system_utility, theta_metric, AllocationTrace, ScaledSolve, ThroughputProfile,
};
pub use error::{Error, Result};
pub use leasing::{
    baseline_on_demand_only, baseline_reservation_only, evaluate_session, optimal_on_demand,
    pf_reservation_plan, pf_reservation_root, sample_gradient, session_surplus, sgd_reservation,
    LeasePlan, ReservationMethod, SessionOutcome, SgdOptions, SgdStep,
};
pub use montecarlo::{
    pf_decision_stats, run_period, run_period_with_profiles, shares_session_profiles,
    solve_session_profiles, sweep, sweep_point, sweep_point_with_profiles, ExperimentGrid,
    PeriodPlan, PfDecisionStats, RunStats, Scheme, SchemeStats, SweepBase, SweepRow,
    SweepVariable,
};
pub use prices::{OnDemandPrice, PriceModel};
pub use traffic::TrafficModel;
pub use utility::{check_scale_condition, UtilitySpec};
