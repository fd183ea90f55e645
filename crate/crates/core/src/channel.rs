//! Cell geometry, path loss, and the per-user achievable-rate distribution.
//!
//! A single circular OFDMA cell with the base station at the origin. The
//! per-sub-channel rate is `B·log2(1 + snr·g)` with `g` a unit-mean
//! exponential (Rayleigh power) gain and `snr` the mean received SNR at the
//! user's distance, scaled down by the capacity margin. Path loss follows
//! `(d/D)^(-pathloss_exponent)` normalized so the cell-edge SNR is the
//! calibration anchor; transmit-power inputs are converted into that form.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::quad;
use crate::traffic::TrafficModel;

/// Positions are sampled with `‖x‖ ≥ 10⁻³·D`; the pure power-law path loss
/// diverges at the origin.
pub const MIN_DISTANCE_FRACTION: f64 = 1e-3;

/// Physical-layer constants of the cell.
#[derive(Debug, Clone)]
pub struct ChannelParams {
    bandwidth_per_sc: f64,
    capacity_margin: f64,
    pathloss_exponent: f64,
    cell_radius: f64,
    edge_snr: f64,
}

impl ChannelParams {
    /// Calibrates the cell by its average received SNR at the edge (in dB).
    pub fn from_edge_snr_db(
        edge_snr_db: f64,
        pathloss_exponent: f64,
        cell_radius: f64,
        bandwidth_per_sc: f64,
        capacity_margin: f64,
    ) -> Result<Self> {
        if !edge_snr_db.is_finite() {
            return Err(Error::InvalidParameter("edge SNR must be finite".into()));
        }
        Self::validate_common(pathloss_exponent, cell_radius, bandwidth_per_sc, capacity_margin)?;
        Ok(Self {
            bandwidth_per_sc,
            capacity_margin,
            pathloss_exponent,
            cell_radius,
            edge_snr: 10f64.powf(edge_snr_db / 10.0),
        })
    }

    /// Calibrates from transmit power and noise density; with the path loss
    /// normalized to one at the cell edge, the edge SNR is `P/(N0·B)`.
    pub fn from_tx_power(
        tx_power: f64,
        noise_psd: f64,
        pathloss_exponent: f64,
        cell_radius: f64,
        bandwidth_per_sc: f64,
        capacity_margin: f64,
    ) -> Result<Self> {
        if !(tx_power > 0.0 && noise_psd > 0.0) {
            return Err(Error::InvalidParameter(
                "transmit power and noise density must be positive".into(),
            ));
        }
        Self::validate_common(pathloss_exponent, cell_radius, bandwidth_per_sc, capacity_margin)?;
        Ok(Self {
            bandwidth_per_sc,
            capacity_margin,
            pathloss_exponent,
            cell_radius,
            edge_snr: tx_power / (noise_psd * bandwidth_per_sc),
        })
    }

    /// The cell used throughout the experiments: -6 dB edge SNR, path-loss
    /// exponent 3.67, 1 km radius, unit sub-channel bandwidth, unit margin.
    pub fn default_cell() -> Self {
        Self::from_edge_snr_db(-6.0, 3.67, 1000.0, 1.0, 1.0).expect("valid default parameters")
    }

    fn validate_common(
        pathloss_exponent: f64,
        cell_radius: f64,
        bandwidth_per_sc: f64,
        capacity_margin: f64,
    ) -> Result<()> {
        if !(pathloss_exponent > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "path-loss exponent must exceed 2, got {pathloss_exponent}"
            )));
        }
        if !(cell_radius > 0.0 && bandwidth_per_sc > 0.0) {
            return Err(Error::InvalidParameter(
                "cell radius and sub-channel bandwidth must be positive".into(),
            ));
        }
        if !(capacity_margin >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "capacity margin must be at least 1, got {capacity_margin}"
            )));
        }
        Ok(())
    }

    pub fn bandwidth_per_sc(&self) -> f64 {
        self.bandwidth_per_sc
    }

    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    pub fn capacity_margin(&self) -> f64 {
        self.capacity_margin
    }

    pub fn pathloss_exponent(&self) -> f64 {
        self.pathloss_exponent
    }

    /// Mean received SNR at `distance` meters from the base station.
    pub fn mean_snr(&self, distance: f64) -> Result<f64> {
        self.check_distance(distance)?;
        let frac = (distance / self.cell_radius).max(MIN_DISTANCE_FRACTION);
        Ok(self.edge_snr * frac.powf(-self.pathloss_exponent))
    }

    /// Mean SNR divided by the capacity margin; what enters the rate log.
    pub fn effective_snr(&self, distance: f64) -> Result<f64> {
        Ok(self.mean_snr(distance)? / self.capacity_margin)
    }

    fn check_distance(&self, distance: f64) -> Result<()> {
        if !(distance > 0.0 && distance <= self.cell_radius) {
            return Err(Error::Domain(format!(
                "distance {distance} outside (0, {}]",
                self.cell_radius
            )));
        }
        Ok(())
    }
}

/// Achievable rate for a given fading power gain at a given distance.
pub fn instantaneous_rate(params: &ChannelParams, distance: f64, fading_gain: f64) -> Result<f64> {
    if !(fading_gain >= 0.0) {
        return Err(Error::Domain(format!(
            "fading power gain must be non-negative, got {fading_gain}"
        )));
    }
    let snr = params.effective_snr(distance)?;
    Ok(params.bandwidth_per_sc * (1.0 + snr * fading_gain).log2())
}

/// Distribution of the per-sub-channel rate of one user, induced by the
/// unit-mean exponential fading gain.
#[derive(Debug, Clone)]
pub struct RateDistribution {
    user_distance: f64,
    snr: f64,
    bandwidth: f64,
    mean_rate: f64,
}

impl RateDistribution {
    /// P(rate ≤ eta).
    pub fn cdf(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            0.0
        } else {
            1.0 - self.survival(eta)
        }
    }

    /// P(rate > eta) = exp(-(2^(eta/B) - 1)/snr).
    pub fn survival(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            1.0
        } else {
            (-((eta / self.bandwidth).exp2() - 1.0) / self.snr).exp()
        }
    }

    /// Density of the rate.
    pub fn pdf(&self, eta: f64) -> f64 {
        if eta < 0.0 {
            return 0.0;
        }
        let pow = (eta / self.bandwidth).exp2();
        (-(pow - 1.0) / self.snr).exp() * pow * std::f64::consts::LN_2
            / (self.snr * self.bandwidth)
    }

    /// Expected rate, cached at construction.
    pub fn mean_rate(&self) -> f64 {
        self.mean_rate
    }

    /// Distance of the user this distribution belongs to, in meters.
    pub fn user_distance(&self) -> f64 {
        self.user_distance
    }

    /// Effective mean SNR behind this distribution.
    pub fn mean_snr(&self) -> f64 {
        self.snr
    }

    /// Rate value whose upper tail mass equals `tail`.
    pub fn rate_cap(&self, tail: f64) -> f64 {
        self.bandwidth * (1.0 - self.snr * tail.ln()).log2()
    }

    /// Rate produced by a concrete fading gain.
    pub fn rate_from_gain(&self, gain: f64) -> f64 {
        self.bandwidth * (1.0 + self.snr * gain).log2()
    }

    /// Draws one rate via a fresh Rayleigh power gain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gain: f64 = rng.sample(Exp1);
        self.rate_from_gain(gain)
    }
}

/// Builds the rate distribution of a user at `distance` meters.
pub fn rate_distribution(params: &ChannelParams, distance: f64) -> Result<RateDistribution> {
    let snr = params.effective_snr(distance)?;
    let mut dist = RateDistribution {
        user_distance: distance,
        snr,
        bandwidth: params.bandwidth_per_sc,
        mean_rate: 0.0,
    };
    let cap = dist.rate_cap(1e-14);
    dist.mean_rate = quad::integrate(|eta| dist.survival(eta), 0.0, cap, 1e-11)?;
    Ok(dist)
}

/// The realized users of one session: positions normalized to the cell
/// radius, so `‖x‖ ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSet {
    positions: Vec<[f64; 2]>,
}

impl UserSet {
    /// Wraps explicit normalized positions; every point must be in the disk.
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self> {
        for p in &positions {
            let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if !(norm <= 1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "position ({}, {}) lies outside the unit-radius cell",
                    p[0], p[1]
                )));
            }
        }
        Ok(Self { positions })
    }

    /// Places users on the x-axis at the given fractions of the cell radius.
    pub fn at_radial_fractions(fractions: &[f64]) -> Result<Self> {
        Self::new(fractions.iter().map(|&f| [f, 0.0]).collect())
    }

    pub fn empty() -> Self {
        Self { positions: Vec::new() }
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Distances from the base station as fractions of the cell radius,
    /// clamped away from the path-loss singularity at the origin.
    pub fn radial_fractions(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt().clamp(MIN_DISTANCE_FRACTION, 1.0))
            .collect()
    }

    /// Rate distributions of all users under the given channel.
    pub fn rate_distributions(&self, params: &ChannelParams) -> Result<Vec<RateDistribution>> {
        self.radial_fractions()
            .iter()
            .map(|&f| rate_distribution(params, f * params.cell_radius()))
            .collect()
    }
}

/// Samples a session's user set: the count from the traffic model, the
/// positions uniformly on the disk via the square-root radius transform.
pub fn sample_user_set<R: Rng + ?Sized>(traffic: &TrafficModel, rng: &mut R) -> UserSet {
    let count = traffic.sample_count(rng);
    let mut positions = Vec::with_capacity(count);
    for _ in 0..count {
        let radius = rng.random::<f64>().sqrt().max(MIN_DISTANCE_FRACTION);
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        positions.push([radius * angle.cos(), radius * angle.sin()]);
    }
    UserSet { positions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamKind};
    use approx::assert_relative_eq;

    fn cell() -> ChannelParams {
        ChannelParams::default_cell()
    }

    #[test]
    fn zero_gain_gives_zero_rate() {
        assert_eq!(instantaneous_rate(&cell(), 500.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn edge_rate_matches_calibration() {
        // with unit gain at the cell edge the rate is log2(1 + 10^(-0.6)/margin)
        let rate = instantaneous_rate(&cell(), 1000.0, 1.0).unwrap();
        assert_relative_eq!(rate, (1.0 + 10f64.powf(-0.6)).log2(), max_relative = 1e-12);

        let margined =
            ChannelParams::from_edge_snr_db(-6.0, 3.67, 1000.0, 1.0, 2.0).unwrap();
        let rate = instantaneous_rate(&margined, 1000.0, 1.0).unwrap();
        assert_relative_eq!(rate, (1.0 + 10f64.powf(-0.6) / 2.0).log2(), max_relative = 1e-12);
    }

    #[test]
    fn rate_monotone_in_gain_and_distance() {
        let c = cell();
        let r1 = instantaneous_rate(&c, 400.0, 1.0).unwrap();
        let r2 = instantaneous_rate(&c, 400.0, 2.0).unwrap();
        let r3 = instantaneous_rate(&c, 800.0, 1.0).unwrap();
        assert!(r2 > r1);
        assert!(r3 < r1);
    }

    #[test]
    fn rate_domain_errors() {
        let c = cell();
        assert!(instantaneous_rate(&c, 0.0, 1.0).is_err());
        assert!(instantaneous_rate(&c, -5.0, 1.0).is_err());
        assert!(instantaneous_rate(&c, 1500.0, 1.0).is_err());
        assert!(instantaneous_rate(&c, 500.0, -0.1).is_err());
    }

    #[test]
    fn tx_power_parameterization_matches_edge_snr() {
        // P/(N0·B) = 10^(-0.6) reproduces the -6 dB calibration
        let p = 10f64.powf(-0.6);
        let a = ChannelParams::from_tx_power(p, 1.0, 3.67, 1000.0, 1.0, 1.0).unwrap();
        let b = cell();
        assert_relative_eq!(
            a.mean_snr(300.0).unwrap(),
            b.mean_snr(300.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cdf_boundaries() {
        let d = rate_distribution(&cell(), 700.0).unwrap();
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert!(d.cdf(1e6) > 1.0 - 1e-12);
        assert!(d.cdf(d.rate_cap(1e-12)) >= 1.0 - 2e-12);
    }

    #[test]
    fn pdf_integrates_to_one_and_matches_mean() {
        let d = rate_distribution(&cell(), 600.0).unwrap();
        let cap = d.rate_cap(1e-14);
        let mass = quad::integrate(|e| d.pdf(e), 0.0, cap, 1e-11).unwrap();
        assert_relative_eq!(mass, 1.0, max_relative = 1e-9);
        // dual route for the mean: ∫ eta·pdf vs the cached survival integral
        let mean = quad::integrate(|e| e * d.pdf(e), 0.0, cap, 1e-11).unwrap();
        assert_relative_eq!(mean, d.mean_rate(), max_relative = 1e-8);
    }

    #[test]
    fn sampled_mean_rate_matches_quadrature() {
        let d = rate_distribution(&cell(), 500.0).unwrap();
        let mut rng = substream(11, StreamKind::Validation, 2);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut rng);
            sum += x;
            sumsq += x * x;
        }
        let emp = sum / n as f64;
        let var = (sumsq - sum * sum / n as f64) / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (emp - d.mean_rate()).abs() < 3.0 * se,
            "sampled {emp}, quadrature {}, se {se}",
            d.mean_rate()
        );
    }

    #[test]
    fn closer_user_stochastically_dominates() {
        let near = rate_distribution(&cell(), 250.0).unwrap();
        let far = rate_distribution(&cell(), 900.0).unwrap();
        let cap = near.rate_cap(1e-12);
        for i in 0..200 {
            let eta = cap * (i as f64 + 0.5) / 200.0;
            assert!(near.cdf(eta) <= far.cdf(eta) + 1e-15);
        }
        assert!(near.mean_rate() > far.mean_rate());
    }

    #[test]
    fn cdf_reproduces_fading_quantiles() {
        // pushing the gain quantile through the rate map must recover the
        // same probability from the rate CDF
        let d = rate_distribution(&cell(), 420.0).unwrap();
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let gain = -(1.0 - u).ln();
            let eta = d.rate_from_gain(gain);
            assert_relative_eq!(d.cdf(eta), u, max_relative = 1e-9);
        }
    }

    #[test]
    fn degenerate_traffic_yields_empty_set() {
        let t = TrafficModel::uniform(0, 0).unwrap();
        let mut rng = substream(3, StreamKind::Validation, 3);
        for _ in 0..50 {
            assert!(sample_user_set(&t, &mut rng).is_empty());
        }
    }

    #[test]
    fn sampled_count_mean_matches_model() {
        let t = TrafficModel::uniform(0, 16).unwrap();
        let mut rng = substream(5, StreamKind::Validation, 4);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_user_set(&t, &mut rng).count() as f64;
        }
        let emp = sum / n as f64;
        let se = t.cv() * t.mean() / (n as f64).sqrt();
        assert!((emp - t.mean()).abs() < 3.0 * se);
    }

    #[test]
    fn positions_fill_the_disk_uniformly() {
        let t = TrafficModel::degenerate(4);
        let mut rng = substream(5, StreamKind::Validation, 5);
        let mut count = 0usize;
        let mut sum_sq = 0.0;
        for _ in 0..50_000 {
            for p in sample_user_set(&t, &mut rng).positions() {
                count += 1;
                sum_sq += p[0] * p[0] + p[1] * p[1];
            }
        }
        // E[‖x‖²] = 1/2 for a uniform unit disk; var of ‖x‖² is 1/12
        let emp = sum_sq / count as f64;
        let se = (1.0_f64 / 12.0).sqrt() / (count as f64).sqrt();
        assert!((emp - 0.5).abs() < 3.0 * se, "moment {emp}");
    }

    #[test]
    fn positions_never_leave_the_disk() {
        let t = TrafficModel::uniform(0, 16).unwrap();
        let mut rng = substream(6, StreamKind::Validation, 6);
        let mut seen = 0usize;
        while seen < 1_000_000 {
            for p in sample_user_set(&t, &mut rng).positions() {
                let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert!((MIN_DISTANCE_FRACTION..=1.0).contains(&norm));
                seen += 1;
            }
        }
    }

    #[test]
    fn user_set_rejects_outside_positions() {
        assert!(UserSet::new(vec![[1.2, 0.0]]).is_err());
        assert!(UserSet::new(vec![[0.8, 0.0], [0.0, -0.9]]).is_ok());
    }
}
