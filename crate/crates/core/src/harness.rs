//! Monte Carlo experiment orchestration and aggregation.
//!
//! One experiment fixes a scenario, a link direction, and a power-control
//! mode, then runs a number of placement epochs. Every epoch draws a fresh
//! geometry (and, in the uplink, a configurable number of small-scale
//! fading/training draws), evaluates per-user spectral efficiency, and
//! records power-control statistics. Epoch `e` uses an independent random
//! stream whose seed is a hash of the master seed and `e`, so results are
//! reproducible, independent of execution order, and stable under extending
//! the epoch count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::channel::build_link_correlations;
use crate::downlink::{dl_coefficients, dl_se, dl_sinr_hcf, equal_power_nu};
use crate::error::{Error, NumericsError, Result, SolverError};
use crate::pilot::{assign_pilots, simulate_training, TrainingModel};
use crate::power::{
    maxmin_downlink, maxmin_uplink, power_saving_downlink, power_saving_uplink,
    BisectionSettings,
};
use crate::scenario::{sample_placement, Architecture, ScenarioConfig};
use crate::uplink::{ul_coeffs_cellular, ul_coeffs_cf, ul_coeffs_hcf, ul_se, ul_sinr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkDirection {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// Full power in the uplink, equal per-node split in the downlink.
    Baseline,
    /// Max-min fairness power control.
    MaxMin,
}

/// Complete description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub link: LinkDirection,
    pub power: PowerMode,
    pub epochs: usize,
    /// Small-scale fading/training draws per epoch (uplink only).
    pub small_scale_draws: usize,
    pub master_seed: u64,
    /// Record per-solve bisection brackets for debugging.
    #[serde(default)]
    pub trace_solver: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.epochs == 0 {
            return Err(crate::error::ConfigError::Invariant(
                "epochs must be at least 1".into(),
            )
            .into());
        }
        if self.link == LinkDirection::Uplink && self.small_scale_draws == 0 {
            return Err(crate::error::ConfigError::Invariant(
                "small_scale_draws must be at least 1 for uplink runs".into(),
            )
            .into());
        }
        Ok(())
    }
}

/// One per-user spectral-efficiency sample with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeSample {
    pub epoch: usize,
    pub user: usize,
    pub se_bps_hz: f64,
}

/// Per-epoch power-saving statistics of a max-min run, in percent against
/// the corresponding baseline (full power uplink, equal split downlink).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochPowerStats {
    pub uplink_saving_pct: Option<f64>,
    pub cbs_saving_pct: Option<f64>,
    pub eap_mean_saving_pct: Option<f64>,
}

/// One max-min solve, for the optional solver-trace dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub epoch: usize,
    /// Small-scale draw index (uplink solves only).
    pub draw: Option<usize>,
    pub low: f64,
    pub high: f64,
    pub iterations: usize,
    pub achieved_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub tool_version: String,
    pub spec: ExperimentSpec,
}

/// Aggregated output of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub samples: Vec<SeSample>,
    /// Per-epoch sum of per-user spectral efficiencies (bits/s/Hz).
    pub sum_throughput_bps_hz: Vec<f64>,
    /// Per-epoch power statistics (max-min runs only).
    pub power_stats: Vec<EpochPowerStats>,
    /// Per-solve bisection records (only when `trace_solver` is set).
    pub solver_trace: Vec<SolverTrace>,
    pub metadata: RunMetadata,
}

impl ExperimentResult {
    /// All spectral-efficiency values, in recording order.
    pub fn se_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.se_bps_hz).collect()
    }

    /// The 95%-likely (or other level) per-user rate.
    pub fn likely_rate(&self, level: f64) -> Result<f64, NumericsError> {
        likely_rate(&self.se_values(), level)
    }

    pub fn median_se(&self) -> Result<f64, NumericsError> {
        likely_rate(&self.se_values(), 0.5)
    }

    pub fn median_sum_throughput(&self) -> Result<f64, NumericsError> {
        likely_rate(&self.sum_throughput_bps_hz, 0.5)
    }

    /// Mean power savings across epochs, when the run recorded any.
    pub fn mean_power_stats(&self) -> Option<EpochPowerStats> {
        if self.power_stats.is_empty() {
            return None;
        }
        let mean_of = |field: fn(&EpochPowerStats) -> Option<f64>| -> Option<f64> {
            let values: Vec<f64> = self.power_stats.iter().filter_map(field).collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        };
        Some(EpochPowerStats {
            uplink_saving_pct: mean_of(|s| s.uplink_saving_pct),
            cbs_saving_pct: mean_of(|s| s.cbs_saving_pct),
            eap_mean_saving_pct: mean_of(|s| s.eap_mean_saving_pct),
        })
    }
}

/// 64-bit mix used for seed splitting (splitmix64 finalizer).
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent child stream for one epoch: the master seed xored with the
/// hashed epoch index, hashed again.
pub fn epoch_rng(master_seed: u64, epoch: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix64(master_seed ^ mix64(epoch as u64)))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::INFINITY, f64::min)
}

struct EpochOutput {
    per_user_se: Vec<f64>,
    power: EpochPowerStats,
    trace: Vec<SolverTrace>,
}

const NO_POWER_STATS: EpochPowerStats = EpochPowerStats {
    uplink_saving_pct: None,
    cbs_saving_pct: None,
    eap_mean_saving_pct: None,
};

fn run_epoch(
    spec: &ExperimentSpec,
    epoch: usize,
    settings: &BisectionSettings,
) -> Result<EpochOutput> {
    let config = &spec.scenario;
    let mut rng = epoch_rng(spec.master_seed, epoch);
    let placement = sample_placement(config, &mut rng)?;
    let network = build_link_correlations(config, &placement)?;
    let assignment = assign_pilots(config.users, config.tau_p)?;

    let mut trace = Vec::new();

    match spec.link {
        LinkDirection::Downlink => {
            let co = dl_coefficients(&network, &assignment, config)?;
            let nu_eq = equal_power_nu(config.users, network.node_count());
            let (nu, power) = match spec.power {
                PowerMode::Baseline => (nu_eq.clone(), NO_POWER_STATS),
                PowerMode::MaxMin => {
                    let alloc = maxmin_downlink(&co, settings)?;
                    if spec.trace_solver {
                        trace.push(SolverTrace {
                            epoch,
                            draw: None,
                            low: alloc.bracket.0,
                            high: alloc.bracket.1,
                            iterations: alloc.iterations,
                            achieved_target: alloc.achieved_target,
                        });
                    }
                    let is_central: Vec<bool> =
                        network.nodes.iter().map(|n| n.is_central).collect();
                    let saving = power_saving_downlink(&alloc.nu, &nu_eq, &is_central)?;
                    (
                        alloc.nu,
                        EpochPowerStats {
                            uplink_saving_pct: None,
                            cbs_saving_pct: saving.cbs_pct,
                            eap_mean_saving_pct: saving.eap_mean_pct,
                        },
                    )
                }
            };
            let xi = dl_sinr_hcf(&co, &nu)?;
            let per_user_se: Vec<f64> = xi.iter().map(|&x| dl_se(x)).collect();

            if spec.power == PowerMode::MaxMin {
                let xi_eq = dl_sinr_hcf(&co, &nu_eq)?;
                let se_eq: Vec<f64> = xi_eq.iter().map(|&x| dl_se(x)).collect();
                let slack = settings.feasibility_tolerance * (1.0 + min_of(&se_eq));
                if min_of(&per_user_se) < min_of(&se_eq) - slack {
                    return Err(SolverError::Invariant(format!(
                        "max-min minimum SE {} fell below the equal-power minimum {}",
                        min_of(&per_user_se),
                        min_of(&se_eq)
                    ))
                    .into());
                }
            }
            Ok(EpochOutput {
                per_user_se,
                power,
                trace,
            })
        }
        LinkDirection::Uplink => {
            let model = TrainingModel::new(&network, assignment, config)?;
            let users = config.users;
            let full = vec![1.0f64; users];
            let mut se_acc = vec![0.0f64; users];
            let mut eta_mean_acc = 0.0f64;
            for draw in 0..spec.small_scale_draws {
                let channels = model.draw_channels(&mut rng);
                let est = simulate_training(&channels, &model, &mut rng);
                let co = match config.architecture {
                    Architecture::Cellular => ul_coeffs_cellular(&est),
                    Architecture::Cf => ul_coeffs_cf(&est),
                    Architecture::Hcf | Architecture::HcfHalf => ul_coeffs_hcf(&est),
                };
                let eta = match spec.power {
                    PowerMode::Baseline => full.clone(),
                    PowerMode::MaxMin => {
                        let alloc = maxmin_uplink(&co, settings)?;
                        if spec.trace_solver {
                            trace.push(SolverTrace {
                                epoch,
                                draw: Some(draw),
                                low: alloc.bracket.0,
                                high: alloc.bracket.1,
                                iterations: alloc.iterations,
                                achieved_target: alloc.achieved_target,
                            });
                        }
                        alloc.eta
                    }
                };
                let gamma = ul_sinr(&co, &eta);
                for (k, &g) in gamma.iter().enumerate() {
                    se_acc[k] += ul_se(g, config.tau_p, config.tau_u)?;
                }
                if spec.power == PowerMode::MaxMin {
                    // Per-draw dominance: the bisection starts from the
                    // full-power witness, so the equalized SINR can never
                    // fall below the full-power minimum on the same draw.
                    let gamma_full = ul_sinr(&co, &full);
                    let min_full = min_of(&gamma_full);
                    let min_mm = min_of(&gamma);
                    let slack = settings.feasibility_tolerance * (1.0 + min_full);
                    if min_mm < min_full - slack {
                        return Err(SolverError::Invariant(format!(
                            "max-min minimum SINR {min_mm} fell below the full-power minimum {min_full}",
                        ))
                        .into());
                    }
                    eta_mean_acc += eta.iter().sum::<f64>() / users as f64;
                }
            }
            let draws = spec.small_scale_draws as f64;
            let per_user_se: Vec<f64> = se_acc.iter().map(|s| s / draws).collect();

            let power = if spec.power == PowerMode::MaxMin {
                let mean_eta = eta_mean_acc / draws;
                EpochPowerStats {
                    uplink_saving_pct: Some(power_saving_uplink(&[mean_eta], &[1.0])?),
                    cbs_saving_pct: None,
                    eap_mean_saving_pct: None,
                }
            } else {
                NO_POWER_STATS
            };
            Ok(EpochOutput {
                per_user_se,
                power,
                trace,
            })
        }
    }
}

/// Runs a full experiment: seeded placement epochs, per-user SE samples, sum
/// throughput, and power statistics.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let settings = BisectionSettings::default();
    let mut samples = Vec::with_capacity(spec.epochs * spec.scenario.users);
    let mut sum_throughput = Vec::with_capacity(spec.epochs);
    let mut power_stats = Vec::new();
    let mut solver_trace = Vec::new();

    for epoch in 0..spec.epochs {
        let output = run_epoch(spec, epoch, &settings).map_err(|e| Error::Epoch {
            epoch,
            source: Box::new(e),
        })?;
        for (user, &se) in output.per_user_se.iter().enumerate() {
            samples.push(SeSample {
                epoch,
                user,
                se_bps_hz: se,
            });
        }
        sum_throughput.push(output.per_user_se.iter().sum());
        if spec.power == PowerMode::MaxMin {
            power_stats.push(output.power);
        }
        solver_trace.extend(output.trace);
    }

    let spec_bytes = serde_json::to_vec(spec).expect("spec serializes");
    let run_id = format!(
        "{:016x}",
        fnv1a(&[spec_bytes.as_slice(), env!("CARGO_PKG_VERSION").as_bytes()].concat())
    );

    Ok(ExperimentResult {
        samples,
        sum_throughput_bps_hz: sum_throughput,
        power_stats,
        solver_trace,
        metadata: RunMetadata {
            run_id,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
        },
    })
}

/// Standard empirical CDF: sorted values with probabilities `i / N`.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::Domain("empty sample set".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// Empirical quantile at probability `1 - level`: the sorted sample at
/// 1-based index `ceil((1 - level) * N)`. With `level = 0.95` this is the
/// 95%-likely rate (5th percentile).
pub fn likely_rate(samples: &[f64], level: f64) -> Result<f64, NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::Domain("empty sample set".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(NumericsError::Domain(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    // Guard the ceiling against floating-point residue in (1 - level) * n.
    let index = ((1.0 - level) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[index.min(n) - 1])
}

/// Sum throughput of one epoch: the per-user SE total in bits/s/Hz and,
/// scaled by the bandwidth, in bits/s.
pub fn sum_throughput(per_user_se: &[f64], bandwidth_hz: f64) -> Result<(f64, f64), NumericsError> {
    if per_user_se.is_empty() {
        return Err(NumericsError::Domain("empty epoch".into()));
    }
    let total: f64 = per_user_se.iter().sum();
    Ok((total, total * bandwidth_hz))
}
