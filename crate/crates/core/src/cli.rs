//! Command-line interface: argument parsing, configuration files, and
//! result emission.
//!
//! A run is described by a scenario preset (`--scenario`, `--arch`) with
//! optional JSON field overrides (`--config`), a link direction, a power
//! mode, and Monte Carlo controls. Results are written as flat files:
//!
//! * `samples.csv` — `epoch,user,se_bps_hz`, one row per user per epoch;
//! * `cdf.csv` — `value,prob`, the empirical per-user SE CDF;
//! * `summary.json` — headline statistics (95%-likely rate, median,
//!   throughput, power savings) plus the resolved spec;
//! * `manifest.json` — tool version, run id, timestamp, output paths;
//! * `solver_trace.jsonl` — per-solve bisection records (with
//!   `--trace-solver`).
//!
//! Exit codes: 0 success, 2 usage error, 3 solver/numerical error, 4 I/O
//! error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::harness::{
    empirical_cdf, likely_rate, run_experiment, ExperimentResult, ExperimentSpec, LinkDirection,
    PowerMode,
};
use crate::scenario::{build_scenario, Architecture, ScenarioOverrides, ScenarioScale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArchArg {
    Hcf,
    HcfHalf,
    Cf,
    Cellular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LinkArg {
    Ul,
    Dl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PowerArg {
    /// Equal per-node power split (downlink wording).
    Equal,
    /// Full transmit power (uplink wording; same baseline as `equal`).
    Full,
    /// Max-min fairness power control.
    Maxmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmitFormat {
    Csv,
    Json,
    Both,
}

/// Monte Carlo spectral-efficiency simulator for hierarchical cell-free,
/// cell-free, and cellular massive MIMO.
#[derive(Debug, Parser)]
#[command(name = "hcf-sim", version)]
struct Cli {
    /// Deployment scale preset.
    #[arg(long, value_enum, default_value = "micro")]
    scenario: ScaleArg,
    /// Network architecture.
    #[arg(long, value_enum, default_value = "hcf")]
    arch: ArchArg,
    /// Link direction.
    #[arg(long, value_enum, default_value = "dl")]
    link: LinkArg,
    /// Power control: `equal` and `full` are the same baseline (equal split
    /// in the downlink, full power in the uplink).
    #[arg(long, value_enum, default_value = "equal")]
    power: PowerArg,
    /// Placement epochs; defaults to 300 (micro) or 150 (macro).
    #[arg(long)]
    epochs: Option<usize>,
    /// Master seed for the epoch streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Small-scale fading draws per epoch (uplink only).
    #[arg(long = "sf-draws", default_value_t = 20)]
    sf_draws: usize,
    /// JSON file with scenario field overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Which files to emit (`manifest.json` is always written).
    #[arg(long, value_enum, default_value = "both")]
    emit: EmitFormat,
    /// Dump per-solve bisection brackets to `solver_trace.jsonl`.
    #[arg(long)]
    trace_solver: bool,
}

/// Everything the CLI resolved: the experiment plus output options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub spec: ExperimentSpec,
    pub out_dir: PathBuf,
    pub emit: EmitFormat,
}

#[derive(Debug)]
pub enum CliError {
    Clap(clap::Error),
    Usage(String),
}

/// Parses command-line arguments into a validated run plan.
pub fn parse_cli<I, T>(argv: I) -> Result<RunPlan, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;

    let overrides = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
            })?;
            serde_json::from_str::<ScenarioOverrides>(&text).map_err(|e| {
                CliError::Usage(format!("invalid config file {}: {e}", path.display()))
            })?
        }
        None => ScenarioOverrides::default(),
    };

    let scale = match cli.scenario {
        ScaleArg::Micro => ScenarioScale::Micro,
        ScaleArg::Macro => ScenarioScale::Macro,
    };
    let arch = match cli.arch {
        ArchArg::Hcf => Architecture::Hcf,
        ArchArg::HcfHalf => Architecture::HcfHalf,
        ArchArg::Cf => Architecture::Cf,
        ArchArg::Cellular => Architecture::Cellular,
    };
    let scenario =
        build_scenario(scale, arch, &overrides).map_err(|e| CliError::Usage(e.to_string()))?;

    let epochs = cli.epochs.unwrap_or(match scale {
        ScenarioScale::Micro => 300,
        ScenarioScale::Macro => 150,
    });
    let spec = ExperimentSpec {
        scenario,
        link: match cli.link {
            LinkArg::Ul => LinkDirection::Uplink,
            LinkArg::Dl => LinkDirection::Downlink,
        },
        power: match cli.power {
            PowerArg::Equal | PowerArg::Full => PowerMode::Baseline,
            PowerArg::Maxmin => PowerMode::MaxMin,
        },
        epochs,
        small_scale_draws: cli.sf_draws,
        master_seed: cli.seed,
        trace_solver: cli.trace_solver,
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    Ok(RunPlan {
        spec,
        out_dir: cli.out,
        emit: cli.emit,
    })
}

/// Run manifest written alongside every result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: ExperimentSpec,
    pub tool_version: String,
    pub run_id: String,
    pub timestamp_unix: u64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    run_id: &'a str,
    tool_version: &'a str,
    samples: usize,
    likely_rate_95_bps_hz: f64,
    median_se_bps_hz: f64,
    mean_sum_throughput_bps_hz: f64,
    median_sum_throughput_bps_hz: f64,
    mean_sum_throughput_bps: f64,
    power_savings: Option<crate::harness::EpochPowerStats>,
    spec: &'a ExperimentSpec,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes the result files and returns the paths written.
pub fn emit_results(result: &ExperimentResult, plan: &RunPlan) -> Result<Vec<PathBuf>, Error> {
    let dir = &plan.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir.as_path()))?;
    let mut written = Vec::new();

    let csv_wanted = matches!(plan.emit, EmitFormat::Csv | EmitFormat::Both);
    let json_wanted = matches!(plan.emit, EmitFormat::Json | EmitFormat::Both);

    if csv_wanted {
        let samples_path = dir.join("samples.csv");
        let mut csv = String::from("epoch,user,se_bps_hz\n");
        for s in &result.samples {
            csv.push_str(&format!("{},{},{}\n", s.epoch, s.user, s.se_bps_hz));
        }
        write_file(&samples_path, csv.as_bytes())?;
        written.push(samples_path);

        let cdf_path = dir.join("cdf.csv");
        let cdf = empirical_cdf(&result.se_values()).map_err(Error::Numerics)?;
        let mut csv = String::from("value,prob\n");
        for (value, prob) in cdf {
            csv.push_str(&format!("{value},{prob}\n"));
        }
        write_file(&cdf_path, csv.as_bytes())?;
        written.push(cdf_path);
    }

    if json_wanted {
        let se = result.se_values();
        let mean_sum = result.sum_throughput_bps_hz.iter().sum::<f64>()
            / result.sum_throughput_bps_hz.len().max(1) as f64;
        let summary = Summary {
            run_id: &result.metadata.run_id,
            tool_version: &result.metadata.tool_version,
            samples: se.len(),
            likely_rate_95_bps_hz: likely_rate(&se, 0.95).map_err(Error::Numerics)?,
            median_se_bps_hz: likely_rate(&se, 0.5).map_err(Error::Numerics)?,
            mean_sum_throughput_bps_hz: mean_sum,
            median_sum_throughput_bps_hz: result
                .median_sum_throughput()
                .map_err(Error::Numerics)?,
            mean_sum_throughput_bps: mean_sum * result.metadata.spec.scenario.bandwidth_hz,
            power_savings: result.mean_power_stats(),
            spec: &result.metadata.spec,
        };
        let path = dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }

    if result.metadata.spec.trace_solver && !result.solver_trace.is_empty() {
        let path = dir.join("solver_trace.jsonl");
        let mut text = String::new();
        for record in &result.solver_trace {
            text.push_str(&serde_json::to_string(record).expect("trace serializes"));
            text.push('\n');
        }
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }

    let manifest_path = dir.join("manifest.json");
    let manifest = RunManifest {
        spec: result.metadata.spec.clone(),
        tool_version: result.metadata.tool_version.clone(),
        run_id: result.metadata.run_id.clone(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs: written
            .iter()
            .map(|p| p.display().to_string())
            .chain(std::iter::once(manifest_path.display().to_string()))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&manifest_path, text.as_bytes())?;
    written.push(manifest_path);

    Ok(written)
}

fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Config(_) => EXIT_USAGE,
        Error::Io { .. } => EXIT_IO,
        Error::Epoch { source, .. } => exit_code_for(source),
        Error::Geometry(_) | Error::Numerics(_) | Error::Solver(_) => EXIT_SOLVER,
    }
}

/// Full CLI entry point; returns the process exit code.
pub fn run_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let plan = match parse_cli(argv) {
        Ok(plan) => plan,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            // Help and version requests exit successfully.
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };

    eprintln!(
        "running {} epochs: {} {:?} {:?} (seed {})",
        plan.spec.epochs,
        plan.spec.scenario.architecture.as_str(),
        plan.spec.link,
        plan.spec.power,
        plan.spec.master_seed,
    );

    let result = match run_experiment(&plan.spec) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };

    match emit_results(&result, &plan) {
        Ok(paths) => {
            let se = result.se_values();
            if let Ok(rate) = likely_rate(&se, 0.95) {
                eprintln!("95%-likely per-user SE: {rate:.4} bps/Hz");
            }
            for path in paths {
                println!("{}", path.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
