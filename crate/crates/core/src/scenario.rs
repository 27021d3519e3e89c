//! Experiment configuration and random network geometry.
//!
//! A scenario fixes the antenna budget `M = N_b + L·N_a` (cBS antennas plus
//! distributed eAP antennas), user count, pilot dimensioning, power and noise
//! figures, and the large-scale propagation model. The cellular and cell-free
//! architectures are the degenerate splits `L = 0` and `N_b = 0` of the same
//! configuration type, so every downstream formula handles all architectures
//! through one code path.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{ConfigError, GeometryError};

/// Minimum node-to-user link distance in meters. Keeps the microcell
/// log-distance model out of its near-field singularity and coincides with
/// the first breakpoint of the macrocell three-slope model.
pub const D_MIN_M: f64 = 10.0;

/// Rejection budget per placed point before geometry sampling gives up.
const MAX_PLACEMENT_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Central base station plus distributed edge APs.
    Hcf,
    /// HCF variant with half of the antenna budget centralized.
    HcfHalf,
    /// Fully distributed: APs only, no central array.
    Cf,
    /// Fully centralized: one co-located array.
    Cellular,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Hcf => "hcf",
            Architecture::HcfHalf => "hcf-half",
            Architecture::Cf => "cf",
            Architecture::Cellular => "cellular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioScale {
    Micro,
    Macro,
}

impl ScenarioScale {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioScale::Micro => "micro",
            ScenarioScale::Macro => "macro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathLossModel {
    /// 3GPP urban-microcell log-distance model, distances in meters.
    Umi,
    /// Three-slope COST-Hata model, distances in kilometers.
    CostHata,
}

/// Parameters of the three-slope COST-Hata loss.
///
/// The breakpoints are interpreted in kilometers (`d0 = 0.01 km`,
/// `d1 = 0.05 km`); the slope constants only produce physically sane losses
/// with kilometer distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostHataParams {
    pub carrier_ghz: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub d0_km: f64,
    pub d1_km: f64,
}

impl Default for CostHataParams {
    fn default() -> Self {
        CostHataParams {
            carrier_ghz: 1.9,
            ap_height_m: 15.0,
            ue_height_m: 1.65,
            d0_km: 0.01,
            d1_km: 0.05,
        }
    }
}

impl CostHataParams {
    /// Fixed-offset term `L0` in dB (carrier frequency enters in MHz).
    pub fn l0_db(&self) -> f64 {
        let f_mhz = self.carrier_ghz * 1000.0;
        46.3 + 33.9 * f_mhz.log10() - 13.82 * self.ap_height_m.log10()
            - (1.1 * f_mhz.log10() - 0.7) * self.ue_height_m
            + 1.56 * f_mhz.log10()
            - 0.8
    }
}

/// Complete description of one simulated deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub coverage_radius_m: f64,
    /// Total service antennas `M = N_b + L·N_a`.
    pub total_antennas: usize,
    /// Active users `K`.
    pub users: usize,
    pub architecture: Architecture,
    /// Antennas at the central base station (`N_b`, 0 for CF).
    pub cbs_antennas: usize,
    /// Number of distributed eAPs/APs (`L`, 0 for cellular).
    pub eap_count: usize,
    /// Antennas per eAP/AP (`N_a`).
    pub eap_antennas: usize,
    /// Pilot sequence length in channel uses.
    pub tau_p: usize,
    /// Coherence block length in channel uses.
    pub tau_c: usize,
    /// Normalization length for the uplink pilot-overhead prelog.
    pub tau_u: usize,
    /// UE transmit power constraint `p_u` in watts.
    pub ue_power_w: f64,
    pub per_antenna_power_w: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub path_loss: PathLossModel,
    pub shadow_sigma_db: f64,
    /// Angular standard deviation of local scattering, degrees.
    pub asd_deg: f64,
    pub cost_hata: CostHataParams,
}

impl ScenarioConfig {
    /// Validates every structural invariant, naming the violated constraint.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| Err(ConfigError::Invariant(msg));
        let m = self.cbs_antennas + self.eap_count * self.eap_antennas;
        if m != self.total_antennas {
            return err(format!(
                "antenna budget mismatch: N_b + L*N_a = {} + {}*{} = {m} != M = {}",
                self.cbs_antennas, self.eap_count, self.eap_antennas, self.total_antennas
            ));
        }
        match self.architecture {
            Architecture::Cellular => {
                if self.eap_count != 0 || self.cbs_antennas != self.total_antennas {
                    return err(format!(
                        "cellular requires L = 0 and N_b = M, got L = {}, N_b = {}",
                        self.eap_count, self.cbs_antennas
                    ));
                }
            }
            Architecture::Cf => {
                if self.cbs_antennas != 0 {
                    return err(format!("cf requires N_b = 0, got N_b = {}", self.cbs_antennas));
                }
            }
            Architecture::Hcf | Architecture::HcfHalf => {
                if self.cbs_antennas == 0 || self.eap_count == 0 {
                    return err(format!(
                        "hcf requires N_b > 0 and L > 0, got N_b = {}, L = {}",
                        self.cbs_antennas, self.eap_count
                    ));
                }
            }
        }
        if self.users == 0 {
            return err("K must be at least 1".into());
        }
        if self.users > self.tau_c {
            return err(format!("K = {} exceeds tau_c = {}", self.users, self.tau_c));
        }
        if self.tau_p < 1 {
            return err("tau_p must be at least 1".into());
        }
        if self.tau_p > self.tau_c {
            return err(format!("tau_p = {} exceeds tau_c = {}", self.tau_p, self.tau_c));
        }
        if self.tau_u < 1 {
            return err("tau_u must be at least 1".into());
        }
        for (name, value) in [
            ("coverage_radius_m", self.coverage_radius_m),
            ("ue_power_w", self.ue_power_w),
            ("per_antenna_power_w", self.per_antenna_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
            ("asd_deg", self.asd_deg),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return err(format!("{name} must be strictly positive, got {value}"));
            }
        }
        if self.shadow_sigma_db < 0.0 || !self.shadow_sigma_db.is_finite() {
            return err(format!(
                "shadow_sigma_db must be nonnegative, got {}",
                self.shadow_sigma_db
            ));
        }
        Ok(())
    }

    /// Receiver noise power in watts.
    pub fn noise_power_w(&self) -> f64 {
        noise_power(
            self.noise_density_dbm_hz,
            self.bandwidth_hz,
            self.noise_figure_db,
        )
    }

    /// Uplink pilot-overhead prelog `1 - tau_p / tau_u`.
    pub fn uplink_prelog(&self) -> f64 {
        1.0 - self.tau_p as f64 / self.tau_u as f64
    }

    /// Whether the deployment includes a central array.
    pub fn has_cbs(&self) -> bool {
        self.cbs_antennas > 0
    }

    /// Downlink power budget of the central array (`N_b` antennas).
    pub fn cbs_power_w(&self) -> f64 {
        self.cbs_antennas as f64 * self.per_antenna_power_w
    }

    /// Downlink power budget of one eAP (`N_a` antennas).
    pub fn eap_power_w(&self) -> f64 {
        self.eap_antennas as f64 * self.per_antenna_power_w
    }

    /// Total number of transmitting nodes (central array plus eAPs).
    pub fn node_count(&self) -> usize {
        usize::from(self.has_cbs()) + self.eap_count
    }
}

/// Optional field-level overrides applied on top of a preset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioOverrides {
    pub coverage_radius_m: Option<f64>,
    pub total_antennas: Option<usize>,
    pub users: Option<usize>,
    pub cbs_antennas: Option<usize>,
    pub eap_count: Option<usize>,
    pub eap_antennas: Option<usize>,
    pub tau_p: Option<usize>,
    pub tau_c: Option<usize>,
    pub tau_u: Option<usize>,
    pub ue_power_w: Option<f64>,
    pub per_antenna_power_w: Option<f64>,
    pub noise_density_dbm_hz: Option<f64>,
    pub noise_figure_db: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub shadow_sigma_db: Option<f64>,
    pub asd_deg: Option<f64>,
}

impl ScenarioOverrides {
    fn apply(&self, config: &mut ScenarioConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        set!(
            coverage_radius_m,
            total_antennas,
            users,
            cbs_antennas,
            eap_count,
            eap_antennas,
            tau_p,
            tau_c,
            tau_u,
            ue_power_w,
            per_antenna_power_w,
            noise_density_dbm_hz,
            noise_figure_db,
            bandwidth_hz,
            shadow_sigma_db,
            asd_deg
        );
    }
}

/// Builds one of the stock scenario parameterizations, applying overrides and
/// validating the result.
pub fn build_scenario(
    scale: ScenarioScale,
    architecture: Architecture,
    overrides: &ScenarioOverrides,
) -> Result<ScenarioConfig, ConfigError> {
    let (radius, m, k, tau_p, asd, shadow, path_loss) = match scale {
        ScenarioScale::Micro => (500.0, 128usize, 8usize, 4usize, 30.0, 4.0, PathLossModel::Umi),
        ScenarioScale::Macro => (
            2000.0,
            384usize,
            16usize,
            8usize,
            10.0,
            8.0,
            PathLossModel::CostHata,
        ),
    };
    let n_a = 4usize;
    let (n_b, l) = match (scale, architecture) {
        (ScenarioScale::Micro, Architecture::Hcf) => (32, 24),
        (ScenarioScale::Micro, Architecture::HcfHalf) => (64, 16),
        (ScenarioScale::Micro, Architecture::Cf) => (0, 32),
        (ScenarioScale::Micro, Architecture::Cellular) => (128, 0),
        (ScenarioScale::Macro, Architecture::Hcf) => (96, 72),
        (ScenarioScale::Macro, Architecture::HcfHalf) => (192, 48),
        (ScenarioScale::Macro, Architecture::Cf) => (0, 96),
        (ScenarioScale::Macro, Architecture::Cellular) => (384, 0),
    };
    let mut config = ScenarioConfig {
        coverage_radius_m: radius,
        total_antennas: m,
        users: k,
        architecture,
        cbs_antennas: n_b,
        eap_count: l,
        eap_antennas: n_a,
        tau_p,
        tau_c: 200,
        tau_u: 200,
        ue_power_w: 0.2,
        per_antenna_power_w: 0.05,
        noise_density_dbm_hz: -174.0,
        noise_figure_db: 9.0,
        bandwidth_hz: 5.0e6,
        path_loss,
        shadow_sigma_db: shadow,
        asd_deg: asd,
        cost_hata: CostHataParams::default(),
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

/// Receiver noise power `sigma_z^2` in watts from a spectral density in
/// dBm/Hz, a bandwidth in Hz, and a noise figure in dB.
pub fn noise_power(density_dbm_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    assert!(bandwidth_hz > 0.0, "noise_power: bandwidth must be positive");
    let dbm = density_dbm_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db;
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One sampled network geometry: node and user positions, array
/// orientations, and per-link shadowing draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// Central array position (exactly the disk center).
    pub cbs_position: [f64; 2],
    pub cbs_orientation: f64,
    pub eap_positions: Vec<[f64; 2]>,
    pub eap_orientations: Vec<f64>,
    pub ue_positions: Vec<[f64; 2]>,
    /// Shadowing in dB indexed `[node][user]`, where node 0 is the central
    /// array when present, followed by the eAPs.
    pub shadow_db: Vec<Vec<f64>>,
}

fn uniform_disk_point<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = TAU * rng.random::<f64>();
    [r * theta.cos(), r * theta.sin()]
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Samples eAP and UE positions i.i.d. uniform over the coverage disk,
/// array orientations uniform on `[0, 2pi)`, and independent per-link
/// log-normal shadowing. UE positions closer than [`D_MIN_M`] to any
/// serving node are rejected and resampled.
pub fn sample_placement<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Placement, GeometryError> {
    let radius = config.coverage_radius_m;
    let cbs_position = [0.0, 0.0];
    let cbs_orientation = TAU * rng.random::<f64>();

    let mut eap_positions = Vec::with_capacity(config.eap_count);
    let mut eap_orientations = Vec::with_capacity(config.eap_count);
    for _ in 0..config.eap_count {
        eap_positions.push(uniform_disk_point(radius, rng));
        eap_orientations.push(TAU * rng.random::<f64>());
    }

    // Node anchors that constrain UE placement.
    let mut anchors: Vec<[f64; 2]> = Vec::with_capacity(config.node_count());
    if config.has_cbs() {
        anchors.push(cbs_position);
    }
    anchors.extend_from_slice(&eap_positions);

    let mut ue_positions = Vec::with_capacity(config.users);
    for index in 0..config.users {
        let mut attempts = 0usize;
        let position = loop {
            let candidate = uniform_disk_point(radius, rng);
            if anchors.iter().all(|a| distance(*a, candidate) >= D_MIN_M) {
                break candidate;
            }
            attempts += 1;
            if attempts >= MAX_PLACEMENT_REJECTIONS {
                return Err(GeometryError::PlacementRejected {
                    kind: "user",
                    index,
                    attempts,
                    d_min: D_MIN_M,
                });
            }
        };
        ue_positions.push(position);
    }

    let nodes = config.node_count();
    let mut shadow_db = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let row: Vec<f64> = (0..config.users)
            .map(|_| config.shadow_sigma_db * rng.sample::<f64, _>(StandardNormal))
            .collect();
        shadow_db.push(row);
    }

    Ok(Placement {
        cbs_position,
        cbs_orientation,
        eap_positions,
        eap_orientations,
        ue_positions,
        shadow_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn all_architectures() -> [Architecture; 4] {
        [
            Architecture::Hcf,
            Architecture::HcfHalf,
            Architecture::Cf,
            Architecture::Cellular,
        ]
    }

    #[test]
    fn presets_validate_for_both_scales() {
        for scale in [ScenarioScale::Micro, ScenarioScale::Macro] {
            for arch in all_architectures() {
                let config =
                    build_scenario(scale, arch, &ScenarioOverrides::default()).unwrap();
                assert_eq!(
                    config.cbs_antennas + config.eap_count * config.eap_antennas,
                    config.total_antennas
                );
            }
        }
    }

    #[test]
    fn micro_hcf_antenna_split() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Hcf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        assert_eq!(config.cbs_antennas, 32);
        assert_eq!(config.eap_count, 24);
        assert_eq!(config.eap_antennas, 4);
        assert_eq!(32 + 24 * 4, 128);
    }

    #[test]
    fn macro_cellular_bs_power() {
        let config = build_scenario(
            ScenarioScale::Macro,
            Architecture::Cellular,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        assert_eq!(config.cbs_antennas, 384);
        assert_eq!(config.eap_count, 0);
        assert!((config.cbs_power_w() - 19.2).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_override_is_rejected() {
        let overrides = ScenarioOverrides {
            cbs_antennas: Some(33),
            ..Default::default()
        };
        let err = build_scenario(ScenarioScale::Micro, Architecture::Hcf, &overrides)
            .unwrap_err();
        assert!(err.to_string().contains("antenna budget"));
    }

    #[test]
    fn noise_power_reference_values() {
        // -174 dBm/Hz over 5 MHz with a 9 dB noise figure.
        let p = noise_power(-174.0, 5.0e6, 9.0);
        let dbm = 10.0 * (p * 1e3).log10();
        assert!((dbm + 98.0103).abs() < 1e-4, "noise {dbm} dBm");

        // Unit bandwidth, no noise figure: the density itself.
        let p1 = noise_power(-174.0, 1.0, 0.0);
        assert!((10.0 * (p1 * 1e3).log10() + 174.0).abs() < 1e-9);

        // Doubling the bandwidth adds 10*lg(2) dB.
        let p2 = noise_power(-174.0, 10.0e6, 9.0);
        let delta_db = 10.0 * (p2 / p).log10();
        assert!((delta_db - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn placement_is_deterministic_in_the_seed() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Hcf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        let a = sample_placement(&config, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        let b = sample_placement(&config, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn placement_respects_support_and_minimum_distance() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Hcf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = sample_placement(&config, &mut rng).unwrap();
            for ue in &p.ue_positions {
                assert!(distance(*ue, [0.0, 0.0]) <= config.coverage_radius_m + 1e-9);
                assert!(distance(*ue, p.cbs_position) >= D_MIN_M);
                for eap in &p.eap_positions {
                    assert!(distance(*ue, *eap) >= D_MIN_M);
                }
            }
            for eap in &p.eap_positions {
                assert!(distance(*eap, [0.0, 0.0]) <= config.coverage_radius_m + 1e-9);
            }
        }
    }

    #[test]
    fn placement_mean_squared_radius_matches_uniform_disk() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Cf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut acc = 0.0;
        let mut count = 0usize;
        // 100k sampled points across placements (eAPs are unconstrained
        // uniform draws, so they estimate the raw disk moment).
        while count < 100_000 {
            let p = sample_placement(&config, &mut rng).unwrap();
            for eap in &p.eap_positions {
                acc += eap[0] * eap[0] + eap[1] * eap[1];
                count += 1;
            }
        }
        let mean_r2 = acc / count as f64;
        let expected = config.coverage_radius_m.powi(2) / 2.0;
        assert!(
            (mean_r2 - expected).abs() / expected < 0.01,
            "mean squared radius {mean_r2}, expected {expected}"
        );
    }

    #[test]
    fn placement_density_is_rotation_invariant() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Hcf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let bins = 16usize;
        let mut counts = vec![0usize; bins];
        let mut total = 0usize;
        for _ in 0..2000 {
            let p = sample_placement(&config, &mut rng).unwrap();
            for ue in &p.ue_positions {
                let angle = ue[1].atan2(ue[0]).rem_euclid(TAU);
                counts[((angle / TAU) * bins as f64) as usize % bins] += 1;
                total += 1;
            }
        }
        let expected = total as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // Upper 1% quantile of chi-square with 15 degrees of freedom.
        assert!(chi2 < 30.5779, "chi-square statistic {chi2}");
    }

    #[test]
    fn impossible_minimum_distance_aborts_with_geometry_error() {
        // A coverage disk smaller than the minimum link distance cannot
        // place any user when a central array is present.
        let overrides = ScenarioOverrides {
            coverage_radius_m: Some(5.0),
            ..Default::default()
        };
        let config =
            build_scenario(ScenarioScale::Micro, Architecture::Cellular, &overrides).unwrap();
        let err = sample_placement(&config, &mut ChaCha12Rng::seed_from_u64(1)).unwrap_err();
        assert!(err.to_string().contains("rejections"));
    }

    #[test]
    fn cost_hata_offset_matches_reference() {
        let l0 = CostHataParams::default().l0_db();
        assert!((l0 - 140.72).abs() < 0.01, "L0 = {l0}");
    }

    #[test]
    fn degenerate_architectures_validate() {
        let cf = build_scenario(
            ScenarioScale::Micro,
            Architecture::Cf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        assert_eq!(cf.cbs_antennas, 0);
        assert_eq!(cf.eap_count * cf.eap_antennas, cf.total_antennas);
        assert!(!cf.has_cbs());

        let cel = build_scenario(
            ScenarioScale::Macro,
            Architecture::Cellular,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        assert_eq!(cel.node_count(), 1);
    }
}
