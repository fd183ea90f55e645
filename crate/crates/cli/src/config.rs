//! Experiment configuration: one TOML file per experiment.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use speclease::{
    ChannelParams, ExperimentGrid, OnDemandPrice, PriceModel, Scheme, SgdOptions, SweepBase,
    SweepVariable, TrafficModel, UtilitySpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSection,
    pub utility: UtilitySection,
    pub prices: PricesSection,
    pub traffic: TrafficSection,
    #[serde(default)]
    pub sgd: SgdSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_bandwidth")]
    pub bandwidth_per_sc: f64,
    #[serde(default = "default_margin")]
    pub capacity_margin: f64,
    #[serde(default = "default_pathloss")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_radius")]
    pub cell_radius: f64,
    /// Average received SNR at the cell edge, in dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_snr_db: Option<f64>,
    /// Alternative calibration: transmit power (watts) with noise density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power: Option<f64>,
    /// Noise power spectral density (watts/Hz), paired with `tx_power`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_psd: Option<f64>,
}

fn default_bandwidth() -> f64 {
    1.0
}
fn default_margin() -> f64 {
    1.0
}
fn default_pathloss() -> f64 {
    3.67
}
fn default_radius() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamilyTag {
    AlphaFair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    pub family: UtilityFamilyTag,
    pub alpha: f64,
    /// Under proportional fairness, use the user count as the session
    /// utility metric and the bisection root for the reservation.
    #[serde(default = "default_true")]
    pub pf_fast_path: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricesSection {
    /// Price per reserved sub-channel per period.
    pub reservation: f64,
    /// Currency per unit of utility.
    pub utility_scale: f64,
    /// Cap on a single on-demand request under the linear utility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sc_cap: Option<f64>,
    pub on_demand: OnDemandSection,
}

/// Uniform on-demand price, either by support or by mean and coefficient
/// of variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnDemandSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub k_low: u32,
    pub k_up: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    #[serde(default = "default_sgd_iterations")]
    pub iterations: usize,
    #[serde(default = "default_step_scale")]
    pub step_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
    #[serde(default = "default_gradient_check")]
    pub gradient_check_samples: usize,
}

fn default_sgd_iterations() -> usize {
    20_000
}
fn default_step_scale() -> f64 {
    5.0
}
fn default_gradient_check() -> usize {
    200
}

impl Default for SgdSection {
    fn default() -> Self {
        Self {
            iterations: default_sgd_iterations(),
            step_scale: default_step_scale(),
            initial: None,
            gradient_check_samples: default_gradient_check(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub variable: SweepVariable,
    pub points: Vec<f64>,
    pub sessions_per_point: usize,
    pub schemes: Vec<Scheme>,
    /// Sessions for estimating the mean utility metric of the
    /// reservation-only benchmark outside proportional fairness.
    #[serde(default = "default_baseline_sessions")]
    pub baseline_estimate_sessions: usize,
}

fn default_baseline_sessions() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Worker threads; 0 means all available cores. Results never depend
    /// on this.
    #[serde(default)]
    pub workers: usize,
}

fn default_seed() -> u64 {
    42
}
fn default_out_dir() -> String {
    "out".into()
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            out_dir: default_out_dir(),
            workers: 0,
        }
    }
}

/// Domain objects built from a validated config.
#[derive(Debug)]
pub struct BuiltExperiment {
    pub traffic: TrafficModel,
    pub utility: UtilitySpec,
    pub channel: ChannelParams,
    pub prices: PriceModel,
    pub sgd: SgdOptions,
    pub grid: Option<ExperimentGrid>,
    pub baseline_estimate_sessions: usize,
    pub pf_fast_path: bool,
    pub alpha: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Cross-field validation and conversion into domain types.
    pub fn build(&self) -> anyhow::Result<BuiltExperiment> {
        let ch = &self.channel;
        let channel = match (ch.edge_snr_db, ch.tx_power, ch.noise_psd) {
            (Some(snr), None, None) => ChannelParams::from_edge_snr_db(
                snr,
                ch.pathloss_exponent,
                ch.cell_radius,
                ch.bandwidth_per_sc,
                ch.capacity_margin,
            )
            .context("channel")?,
            (None, Some(p), Some(n0)) => ChannelParams::from_tx_power(
                p,
                n0,
                ch.pathloss_exponent,
                ch.cell_radius,
                ch.bandwidth_per_sc,
                ch.capacity_margin,
            )
            .context("channel")?,
            (None, None, None) => {
                bail!("channel: set either edge_snr_db or tx_power with noise_psd")
            }
            (None, Some(_), None) | (None, None, Some(_)) => {
                bail!("channel: tx_power and noise_psd must be set together")
            }
            _ => bail!("channel: edge_snr_db conflicts with tx_power/noise_psd; set only one"),
        };

        let utility = match self.utility.family {
            UtilityFamilyTag::AlphaFair => {
                UtilitySpec::alpha_fair(self.utility.alpha).context("utility")?
            }
        };

        let od = &self.prices.on_demand;
        let on_demand = match (od.mean, od.cv, od.lo, od.hi) {
            (Some(mean), Some(cv), None, None) => {
                OnDemandPrice::uniform_mean_cv(mean, cv).context("prices.on_demand")?
            }
            (None, None, Some(lo), Some(hi)) => {
                OnDemandPrice::uniform(lo, hi).context("prices.on_demand")?
            }
            _ => bail!("prices.on_demand: set exactly one of (mean, cv) or (lo, hi)"),
        };
        let mut prices = PriceModel::new(self.prices.reservation, self.prices.utility_scale, on_demand)
            .context("prices")?;
        if let Some(cap) = self.prices.sc_cap {
            prices = prices.with_sc_cap(cap).context("prices.sc_cap")?;
        }

        let traffic =
            TrafficModel::uniform(self.traffic.k_low, self.traffic.k_up).context("traffic")?;

        let sgd = SgdOptions {
            iterations: self.sgd.iterations,
            step_scale: self.sgd.step_scale,
            initial: self.sgd.initial,
            pf_fast_path: self.utility.pf_fast_path,
            gradient_check_samples: self.sgd.gradient_check_samples,
        };
        if sgd.iterations == 0 {
            bail!("sgd.iterations must be positive");
        }
        if !(sgd.step_scale > 0.0) {
            bail!("sgd.step_scale must be positive");
        }

        let grid = match &self.grid {
            None => None,
            Some(g) => {
                let grid = ExperimentGrid {
                    variable: g.variable,
                    points: g.points.clone(),
                    sessions_per_point: g.sessions_per_point,
                    schemes: g.schemes.clone(),
                };
                grid.validate().context("grid")?;
                if g.sessions_per_point < 1000 {
                    bail!("grid.sessions_per_point must be at least 1000");
                }
                // every grid point must be realizable before any work starts
                let base = SweepBase {
                    traffic: traffic.clone(),
                    utility: utility.clone(),
                    channel: channel.clone(),
                    prices: prices.clone(),
                    sgd: sgd.clone(),
                    baseline_estimate_sessions: g.baseline_estimate_sessions,
                };
                for &point in &grid.points {
                    base.rebuild(grid.variable, point)
                        .with_context(|| format!("grid point {point} is not realizable"))?;
                }
                Some(grid)
            }
        };

        Ok(BuiltExperiment {
            traffic,
            utility,
            channel,
            prices,
            sgd,
            grid,
            baseline_estimate_sessions: self
                .grid
                .as_ref()
                .map_or(default_baseline_sessions(), |g| g.baseline_estimate_sessions),
            pf_fast_path: self.utility.pf_fast_path,
            alpha: self.utility.alpha,
        })
    }
}

impl BuiltExperiment {
    pub fn sweep_base(&self) -> SweepBase {
        SweepBase {
            traffic: self.traffic.clone(),
            utility: self.utility.clone(),
            channel: self.channel.clone(),
            prices: self.prices.clone(),
            sgd: self.sgd.clone(),
            baseline_estimate_sessions: self.baseline_estimate_sessions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const EXAMPLE: &str = r#"
[channel]
edge_snr_db = -6.0

[utility]
family = "alpha_fair"
alpha = 1.0

[prices]
reservation = 1.0
utility_scale = 5.0

[prices.on_demand]
lo = 0.8
hi = 1.8

[traffic]
k_low = 0
k_up = 16

[grid]
variable = "cs_cv"
points = [0.0, 0.1, 0.2, 0.3, 0.4]
sessions_per_point = 10000
schemes = ["two_stage", "reservation_only", "on_demand_only"]

[run]
seed = 42
out_dir = "out"
"#;

    #[test]
    fn example_config_round_trips() {
        let parsed: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        let serialized = toml::to_string(&parsed).unwrap();
        let reparsed: ExperimentConfig = toml::from_str(&serialized).unwrap();
        assert_eq!(parsed, reparsed);
        parsed.build().unwrap();
    }

    #[test]
    fn ambiguous_channel_calibration_rejected() {
        let mut config: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        config.channel.tx_power = Some(0.25);
        config.channel.noise_psd = Some(1.0);
        assert!(config.build().is_err());
        config.channel.edge_snr_db = None;
        assert!(config.build().is_ok());
        config.channel.noise_psd = None;
        assert!(config.build().is_err());
    }

    #[test]
    fn mixed_on_demand_parameterization_rejected() {
        let mut config: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        config.prices.on_demand.mean = Some(1.3);
        assert!(config.build().is_err());
    }

    #[test]
    fn unrealizable_grid_point_rejected() {
        let mut config: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        // cv = 0.6 pushes the uniform price support negative
        config.grid.as_mut().unwrap().points = vec![0.0, 0.6];
        let err = config.build().unwrap_err();
        assert!(format!("{err:#}").contains("not realizable"));
    }

    #[test]
    fn small_grids_rejected() {
        let mut config: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        config.grid.as_mut().unwrap().sessions_per_point = 10;
        assert!(config.build().is_err());
        config.grid.as_mut().unwrap().sessions_per_point = 1000;
        config.grid.as_mut().unwrap().points = vec![];
        assert!(config.build().is_err());
    }
}
