//! Command implementations behind the `achord` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use achord::propagation::{
    build_connectivity_map, fit_path_loss, fit_residual_rms, read_samples_csv, ConnectivityGrid, GridSpec,
    PathLossModel, PropagationError, RadioSpec,
};
use achord::irm::STRONG_SNR_DB;
use achord::sim::{self, RadioConfig, Scenario, SimError};
use achord::{NodeId, Point3};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "achord", version, about = "Multi-robot comms stack simulator and analysis tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a mission scenario and write metrics, event log and series.
    Run(RunOptions),
    /// Fit the log-distance path loss model to measured samples.
    Fit(FitOptions),
    /// Render a predicted connectivity map for a set of radios.
    Map(MapOptions),
}

#[derive(Debug, Args)]
pub struct RunOptions {
    /// Scenario JSON file.
    #[arg(long = "scenario")]
    pub scenario_path: PathBuf,
    /// Output directory, created if missing.
    #[arg(long = "out")]
    pub output_dir: PathBuf,
    /// Replace the scenario's seed.
    #[arg(long = "seed")]
    pub seed_override: Option<u64>,
    /// Also write a connectivity map of the final backbone.
    #[arg(long = "svg")]
    pub emit_svg: bool,
}

#[derive(Debug, Args)]
pub struct FitOptions {
    /// CSV with header `distance_m,path_loss_db`.
    #[arg(long)]
    pub csv: PathBuf,
    /// Reference distance, meters.
    #[arg(long, default_value_t = 1.0)]
    pub d0: f64,
}

#[derive(Debug, Args)]
pub struct MapOptions {
    /// JSON array of radios.
    #[arg(long)]
    pub radios: PathBuf,
    /// Cell size, meters.
    #[arg(long)]
    pub res: f64,
    /// Margin around the radios' bounding box, meters.
    #[arg(long)]
    pub extent: f64,
    /// Receiver noise at every cell, dB.
    #[arg(long = "tx-noise", default_value_t = -90.0, allow_hyphen_values = true)]
    pub rx_noise: f64,
    #[arg(long, default_value_t = PathLossModel::default().d0)]
    pub d0: f64,
    #[arg(long = "pl-d0", default_value_t = PathLossModel::default().pl_d0)]
    pub pl_d0: f64,
    #[arg(long, default_value_t = PathLossModel::default().eta)]
    pub eta: f64,
    /// Height of the map plane, meters.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub z: f64,
    /// Output directory for connectivity.csv and connectivity.svg.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

pub fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run(o) => cmd_run(&o),
        Command::Fit(o) => cmd_fit(&o),
        Command::Map(o) => cmd_map(&o),
    }
}

/// Runs a scenario and writes `metrics.json`, `events.jsonl`,
/// `buffers.csv`, `topology.jsonl` and `irm.json`, plus `connectivity.svg`
/// when asked. Returns the metrics JSON.
pub fn cmd_run(o: &RunOptions) -> Result<String, CliError> {
    let text = read(&o.scenario_path)?;
    let mut scenario = Scenario::from_json(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", o.scenario_path.display())))?;
    if let Some(seed) = o.seed_override {
        scenario.seed = seed;
    }
    let out = sim::run(&scenario).map_err(|e| match e {
        SimError::Validation(msgs) => CliError::Invalid(format!("invalid scenario:\n  {}", msgs.join("\n  "))),
        other => invalid(other),
    })?;

    fs::create_dir_all(&o.output_dir).map_err(io_err(&o.output_dir))?;
    let metrics = out.metrics_json();
    write(&o.output_dir.join("metrics.json"), &metrics)?;
    write(&o.output_dir.join("events.jsonl"), &out.event_log())?;
    write(&o.output_dir.join("buffers.csv"), &out.buffer_csv())?;
    write(&o.output_dir.join("topology.jsonl"), &out.topology_json_lines())?;
    let irm = serde_json::to_string_pretty(&out.base_irm).map_err(invalid)? + "\n";
    write(&o.output_dir.join("irm.json"), &irm)?;
    if o.emit_svg {
        let points: Vec<Point3> = out.base_irm.nodes().map(|n| n.position).collect();
        let grid = grid_around(&points, 2.0, 10.0, 0.0)?;
        let map = build_connectivity_map(
            &out.backbone,
            &out.backbone_bottlenecks,
            &grid,
            scenario.rx_noise,
            &scenario.model,
        )
        .map_err(invalid)?;
        write(&o.output_dir.join("connectivity.svg"), &map.to_svg(STRONG_SNR_DB))?;
    }
    Ok(metrics)
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub d0: f64,
    pub pl_d0: f64,
    pub eta: f64,
    pub residual_rms: f64,
}

/// Fits the model and returns it with the residual RMS as JSON.
pub fn cmd_fit(o: &FitOptions) -> Result<String, CliError> {
    let file = fs::File::open(&o.csv).map_err(io_err(&o.csv))?;
    let samples = read_samples_csv(file).map_err(invalid)?;
    let model = fit_path_loss(&samples, o.d0).map_err(invalid)?;
    let report = FitReport {
        d0: model.d0,
        pl_d0: model.pl_d0,
        eta: model.eta,
        residual_rms: fit_residual_rms(&samples, &model),
    };
    Ok(serde_json::to_string_pretty(&report).map_err(invalid)? + "\n")
}

/// One entry of the `map` radio file. Radio parameters default to the
/// standard radio; a missing `bottleneck_db` means the radio is the base.
#[derive(Clone, Debug, Deserialize)]
pub struct MapRadio {
    pub id: NodeId,
    pub position: Point3,
    #[serde(default)]
    pub tx_power: Option<f64>,
    #[serde(default)]
    pub noise_level: Option<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub bottleneck_db: Option<f64>,
}

/// Grid covering the bounding box of `points` plus `extent` on every side.
pub fn grid_around(points: &[Point3], res: f64, extent: f64, z: f64) -> Result<GridSpec, CliError> {
    if !(res > 0.0 && res.is_finite()) {
        return Err(CliError::Invalid(format!("--res must be > 0, got {res}")));
    }
    if !(extent >= 0.0 && extent.is_finite()) {
        return Err(CliError::Invalid(format!("--extent must be >= 0, got {extent}")));
    }
    if points.is_empty() {
        return Err(CliError::Invalid("nothing to map".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let cells = |k: usize| (((hi[k] - lo[k] + 2.0 * extent) / res).ceil() as usize).max(1);
    Ok(GridSpec {
        origin: [lo[0] - extent, lo[1] - extent],
        resolution: res,
        width: cells(0),
        height: cells(1),
        z,
    })
}

pub fn build_map(radios: &[MapRadio], o: &MapOptions) -> Result<ConnectivityGrid, CliError> {
    if radios.is_empty() {
        return Err(CliError::Invalid(format!("{}: radio list is empty", o.radios.display())));
    }
    let model = PathLossModel::new(o.d0, o.pl_d0, o.eta).map_err(invalid)?;
    let defaults = RadioConfig::default();
    let mut specs = Vec::new();
    let mut bottlenecks = BTreeMap::new();
    for r in radios {
        specs.push(RadioSpec {
            id: r.id.clone(),
            position: r.position,
            tx_power: r.tx_power.unwrap_or(defaults.tx_power),
            noise_level: r.noise_level.unwrap_or(defaults.noise_level),
            bandwidth: r.bandwidth.unwrap_or(defaults.bandwidth),
        });
        bottlenecks.insert(r.id.clone(), r.bottleneck_db.unwrap_or(f64::INFINITY));
    }
    let points: Vec<Point3> = specs.iter().map(|s| s.position).collect();
    let grid = grid_around(&points, o.res, o.extent, o.z)?;
    build_connectivity_map(&specs, &bottlenecks, &grid, o.rx_noise, &model).map_err(|e| match e {
        PropagationError::EmptyBackbone => CliError::Invalid("radio list is empty".into()),
        other => invalid(other),
    })
}

/// Writes `connectivity.csv` and `connectivity.svg` and returns a one-line
/// summary.
pub fn cmd_map(o: &MapOptions) -> Result<String, CliError> {
    let text = read(&o.radios)?;
    let radios: Vec<MapRadio> =
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", o.radios.display())))?;
    let map = build_map(&radios, o)?;
    fs::create_dir_all(&o.out).map_err(io_err(&o.out))?;
    write(&o.out.join("connectivity.csv"), &map.to_csv())?;
    write(&o.out.join("connectivity.svg"), &map.to_svg(STRONG_SNR_DB))?;
    let strong = map.cells.iter().filter(|&&v| v >= STRONG_SNR_DB).count();
    Ok(format!(
        "{}x{} cells at {} m, {strong} at or above {STRONG_SNR_DB} dB\n",
        map.width, map.height, map.resolution
    ))
}
