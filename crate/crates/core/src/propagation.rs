//! First-order radio propagation.
//!
//! Path loss follows the log-distance law
//!
//! ```text
//! PL(d) = PL(d0) + eta * 10 * log10(d / d0)
//! ```
//!
//! and the SNR received at `j` from transmitter `i` is predicted as
//! `Tx(i) - PL(d(i, j)) - sigma(j)`. The noise term `sigma` is stored signed
//! and subtracted verbatim, so a noise floor of -90 dBm adds 90 dB.
//!
//! Predicted SNR may be negative here. Consumers that treat "0 dB" as "no
//! comms" (roadmap checkpoints, connectivity rasters) clamp at zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{distance, NodeId, Point3};

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("invalid path loss model: {0}")]
    InvalidModel(String),
    #[error("path loss fit needs at least two distinct distances")]
    DegenerateFit,
    #[error("bandwidth must be positive, got {0} Hz")]
    InvalidBandwidth(f64),
    #[error("backbone is empty")]
    EmptyBackbone,
    #[error("no backbone bottleneck for radio {0}")]
    MissingBottleneck(NodeId),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("bad sample CSV: {0}")]
    Csv(String),
}

impl From<csv::Error> for PropagationError {
    fn from(e: csv::Error) -> Self {
        PropagationError::Csv(e.to_string())
    }
}

/// Log-distance path loss parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    /// Reference distance in meters.
    pub d0: f64,
    /// Path loss at the reference distance, dB.
    pub pl_d0: f64,
    /// Path loss exponent.
    pub eta: f64,
}

impl Default for PathLossModel {
    /// Constants fitted to underground field data: eta = 3.83, PL(1 m) = 34 dB.
    fn default() -> Self {
        Self {
            d0: 1.0,
            pl_d0: 34.0,
            eta: 3.83,
        }
    }
}

impl PathLossModel {
    pub fn new(d0: f64, pl_d0: f64, eta: f64) -> Result<Self, PropagationError> {
        let model = Self { d0, pl_d0, eta };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if !(self.d0.is_finite() && self.d0 > 0.0) {
            return Err(PropagationError::InvalidModel(format!(
                "d0 must be > 0, got {}",
                self.d0
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(PropagationError::InvalidModel(format!(
                "eta must be > 0, got {}",
                self.eta
            )));
        }
        if !(self.pl_d0.is_finite() && self.pl_d0 >= 0.0) {
            return Err(PropagationError::InvalidModel(format!(
                "pl_d0 must be >= 0, got {}",
                self.pl_d0
            )));
        }
        Ok(())
    }

    /// Path loss in dB at `d` meters.
    pub fn path_loss(&self, d: f64) -> Result<f64, PropagationError> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(PropagationError::NonPositiveDistance(d));
        }
        Ok(self.pl_d0 + self.eta * 10.0 * (d / self.d0).log10())
    }
}

/// Free function form of [`PathLossModel::path_loss`].
pub fn path_loss(d: f64, model: &PathLossModel) -> Result<f64, PropagationError> {
    model.path_loss(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioSpec {
    pub id: NodeId,
    pub position: Point3,
    /// Transmit power, dBm.
    pub tx_power: f64,
    /// Receiver noise term, dB. Signed; subtracted as-is.
    pub noise_level: f64,
    /// Channel bandwidth, Hz.
    pub bandwidth: f64,
}

/// Predicted SNR (dB) at `rx_position` for a receiver with noise `rx_noise`.
pub fn predict_snr(
    tx: &RadioSpec,
    rx_position: &Point3,
    rx_noise: f64,
    model: &PathLossModel,
) -> Result<f64, PropagationError> {
    let d = distance(&tx.position, rx_position);
    Ok(tx.tx_power - model.path_loss(d)? - rx_noise)
}

/// Like [`predict_snr`], but receivers closer than the reference distance
/// are evaluated at the reference distance. Total for every position.
pub fn predict_snr_near_field(
    tx: &RadioSpec,
    rx_position: &Point3,
    rx_noise: f64,
    model: &PathLossModel,
) -> f64 {
    let d = distance(&tx.position, rx_position).max(model.d0);
    tx.tx_power - (model.pl_d0 + model.eta * 10.0 * (d / model.d0).log10()) - rx_noise
}

/// Converts dB to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Shannon capacity `B * log2(1 + SNR)` in bits per second.
///
/// `snr_db = -inf` yields zero.
pub fn shannon_capacity(bandwidth: f64, snr_db: f64) -> Result<f64, PropagationError> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(PropagationError::InvalidBandwidth(bandwidth));
    }
    Ok(bandwidth * db_to_linear(snr_db).ln_1p() / std::f64::consts::LN_2)
}

/// One measured path loss observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrSample {
    #[serde(rename = "distance_m")]
    pub distance: f64,
    #[serde(rename = "path_loss_db")]
    pub observed_path_loss: f64,
}

/// Ordinary least squares fit of path loss against `10 log10(d / d0)`.
///
/// The intercept is `pl_d0` and the slope is `eta`. The fitted model is not
/// validated, so noisy data may produce a non-physical exponent.
pub fn fit_path_loss(samples: &[SnrSample], d0: f64) -> Result<PathLossModel, PropagationError> {
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(PropagationError::InvalidModel(format!(
            "d0 must be > 0, got {d0}"
        )));
    }
    if let Some(bad) = samples.iter().find(|s| !(s.distance > 0.0)) {
        return Err(PropagationError::NonPositiveDistance(bad.distance));
    }
    let first = match samples.first() {
        Some(s) => s.distance,
        None => return Err(PropagationError::DegenerateFit),
    };
    if samples.iter().all(|s| s.distance == first) {
        return Err(PropagationError::DegenerateFit);
    }

    let n = samples.len() as f64;
    let xs: Vec<f64> = samples
        .iter()
        .map(|s| 10.0 * (s.distance / d0).log10())
        .collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.observed_path_loss).sum::<f64>() / n;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, s) in xs.iter().zip(samples) {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (s.observed_path_loss - mean_y);
    }
    if sxx == 0.0 {
        return Err(PropagationError::DegenerateFit);
    }
    let eta = sxy / sxx;
    Ok(PathLossModel {
        d0,
        pl_d0: mean_y - eta * mean_x,
        eta,
    })
}

/// Root mean square residual of `samples` against `model`.
pub fn fit_residual_rms(samples: &[SnrSample], model: &PathLossModel) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples
        .iter()
        .map(|s| {
            let predicted = model.pl_d0 + model.eta * 10.0 * (s.distance / model.d0).log10();
            (s.observed_path_loss - predicted).powi(2)
        })
        .sum();
    (sum / samples.len() as f64).sqrt()
}

/// Reads samples from a CSV with header `distance_m,path_loss_db`.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<SnrSample>, PropagationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "distance_m" || &headers[1] != "path_loss_db" {
        return Err(PropagationError::Csv(format!(
            "expected header `distance_m,path_loss_db`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for record in rdr.deserialize() {
        let sample: SnrSample = record?;
        out.push(sample);
    }
    Ok(out)
}

/// Raster layout for a connectivity map. Cells are evaluated at their
/// centers on the horizontal plane `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub z: f64,
}

impl GridSpec {
    pub fn cell_center(&self, col: usize, row: usize) -> Point3 {
        [
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
            self.z,
        ]
    }
}

/// Predicted bottleneck SNR per cell, row-major, clamped at 0 dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityGrid {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<f64>,
}

impl ConnectivityGrid {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    /// Row-major CSV, one raster row per line, values with two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 6);
        for row in self.cells.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Heatmap with a color legend; the strong-comms threshold is marked on
    /// the legend.
    pub fn to_svg(&self, strong_threshold_db: f64) -> String {
        const CELL_PX: f64 = 8.0;
        const LEGEND_W: f64 = 120.0;
        let map_w = self.width as f64 * CELL_PX;
        let map_h = self.height as f64 * CELL_PX;
        let max = self
            .cells
            .iter()
            .copied()
            .fold(strong_threshold_db, f64::max)
            .max(1.0);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            map_w + LEGEND_W,
            map_h.max(200.0),
            map_w + LEGEND_W,
            map_h.max(200.0)
        );
        // Row 0 is the lowest y, drawn at the bottom.
        for row in 0..self.height {
            for col in 0..self.width {
                let v = self.get(col, row);
                let y = map_h - (row as f64 + 1.0) * CELL_PX;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.1}" y="{:.1}" width="{CELL_PX}" height="{CELL_PX}" fill="{}"/>"#,
                    col as f64 * CELL_PX,
                    y,
                    heat_color(v / max)
                );
            }
        }

        let lx = map_w + 20.0;
        let bar_h = 160.0;
        let steps = 32;
        for i in 0..steps {
            let frac = i as f64 / (steps - 1) as f64;
            let y = 20.0 + bar_h * (1.0 - frac) - bar_h / steps as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{lx:.1}" y="{y:.1}" width="20" height="{:.2}" fill="{}"/>"#,
                bar_h / steps as f64 + 0.5,
                heat_color(frac)
            );
        }
        let ty = 20.0 + bar_h * (1.0 - strong_threshold_db / max);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="black" stroke-width="2"/>"#,
            lx - 4.0,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10">{strong_threshold_db:.0} dB strong</text>"#,
            lx + 26.0,
            ty + 3.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.1}" y="14" font-size="10">SNR {max:.0} dB</text>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.1}" y="{:.1}" font-size="10">0 dB</text>"#,
            20.0 + bar_h + 12.0
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn heat_color(frac: f64) -> String {
    // dark purple -> teal -> yellow
    let t = frac.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (68.0 + (33.0 - 68.0) * u, 1.0 + (145.0 - 1.0) * u, 84.0 + (140.0 - 84.0) * u)
    } else {
        let u = (t - 0.5) / 0.5;
        (33.0 + (253.0 - 33.0) * u, 145.0 + (231.0 - 145.0) * u, 140.0 + (37.0 - 140.0) * u)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Best predicted bottleneck SNR at `point` over a backbone, clamped at 0.
///
/// Each backbone radio offers `min(bottleneck to base, predicted SNR at
/// point)`; the point takes the best offer. Radios without a bottleneck entry
/// are an error.
pub fn coverage_snr(
    point: &Point3,
    backbone: &[RadioSpec],
    bottlenecks: &BTreeMap<NodeId, f64>,
    rx_noise: f64,
    model: &PathLossModel,
) -> Result<f64, PropagationError> {
    let mut best = 0.0f64;
    for radio in backbone {
        let cap = *bottlenecks
            .get(&radio.id)
            .ok_or_else(|| PropagationError::MissingBottleneck(radio.id.clone()))?;
        let snr = predict_snr_near_field(radio, point, rx_noise, model);
        best = best.max(cap.min(snr));
    }
    Ok(best)
}

pub fn build_connectivity_map(
    backbone: &[RadioSpec],
    bottlenecks: &BTreeMap<NodeId, f64>,
    grid: &GridSpec,
    rx_noise: f64,
    model: &PathLossModel,
) -> Result<ConnectivityGrid, PropagationError> {
    if backbone.is_empty() {
        return Err(PropagationError::EmptyBackbone);
    }
    if !(grid.resolution > 0.0) || grid.width == 0 || grid.height == 0 {
        return Err(PropagationError::InvalidGrid(format!(
            "resolution {} and size {}x{} must be positive",
            grid.resolution, grid.width, grid.height
        )));
    }
    model.validate()?;
    let mut cells = Vec::with_capacity(grid.width * grid.height);
    for row in 0..grid.height {
        for col in 0..grid.width {
            let center = grid.cell_center(col, row);
            cells.push(coverage_snr(&center, backbone, bottlenecks, rx_noise, model)?);
        }
    }
    Ok(ConnectivityGrid {
        origin: grid.origin,
        resolution: grid.resolution,
        width: grid.width,
        height: grid.height,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn radio(id: &str, pos: Point3, tx: f64) -> RadioSpec {
        RadioSpec {
            id: NodeId::new(id),
            position: pos,
            tx_power: tx,
            noise_level: -90.0,
            bandwidth: 1e6,
        }
    }

    #[test]
    fn path_loss_spot_values() {
        let m = PathLossModel::default();
        assert_eq!(m.path_loss(1.0).unwrap(), 34.0);
        assert!((m.path_loss(10.0).unwrap() - 72.3).abs() < 1e-12);
        let other = PathLossModel::new(2.5, 41.0, 2.2).unwrap();
        assert_eq!(other.path_loss(2.5).unwrap(), 41.0);
    }

    #[test]
    fn path_loss_rejects_non_positive_distance() {
        let m = PathLossModel::default();
        assert!(matches!(m.path_loss(0.0), Err(PropagationError::NonPositiveDistance(_))));
        assert!(m.path_loss(-3.0).is_err());
        assert!(m.path_loss(f64::NAN).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(PathLossModel::new(0.0, 34.0, 3.0).is_err());
        assert!(PathLossModel::new(1.0, -1.0, 3.0).is_err());
        assert!(PathLossModel::new(1.0, 34.0, 0.0).is_err());
    }

    #[test]
    fn snr_spot_values() {
        let m = PathLossModel::default();
        let tx = radio("a", [0.0, 0.0, 0.0], 30.0);
        assert!((predict_snr(&tx, &[1.0, 0.0, 0.0], -90.0, &m).unwrap() - 86.0).abs() < 1e-12);
        assert!((predict_snr(&tx, &[0.0, 10.0, 0.0], -90.0, &m).unwrap() - 47.7).abs() < 1e-12);
        // tx = pl_d0 + sigma at d0 cancels out
        let tx = radio("b", [0.0, 0.0, 0.0], 34.0 - 90.0);
        assert_eq!(predict_snr(&tx, &[0.0, 0.0, 1.0], -90.0, &m).unwrap(), 0.0);
        assert!(predict_snr(&tx, &[0.0, 0.0, 0.0], -90.0, &m).is_err());
    }

    #[test]
    fn shannon_spot_values() {
        assert_eq!(shannon_capacity(1e6, f64::NEG_INFINITY).unwrap(), 0.0);
        assert!((shannon_capacity(1e6, 0.0).unwrap() - 1e6).abs() < 1e-6);
        // 1e6 * log2(101)
        assert!((shannon_capacity(1e6, 20.0).unwrap() - 6_658_211.48).abs() < 1.0);
        assert!(shannon_capacity(0.0, 10.0).is_err());
    }

    #[test]
    fn fit_recovers_default_model() {
        let m = PathLossModel::default();
        let samples: Vec<SnrSample> = [1.0, 2.0, 5.0, 10.0, 50.0]
            .iter()
            .map(|&d| SnrSample {
                distance: d,
                observed_path_loss: m.path_loss(d).unwrap(),
            })
            .collect();
        let fit = fit_path_loss(&samples, 1.0).unwrap();
        assert!((fit.eta - 3.83).abs() < 1e-9);
        assert!((fit.pl_d0 - 34.0).abs() < 1e-9);
        assert!(fit_residual_rms(&samples, &fit) < 1e-9);
    }

    #[test]
    fn fit_degenerate_inputs() {
        let s = SnrSample {
            distance: 1.0,
            observed_path_loss: 34.0,
        };
        assert!(matches!(fit_path_loss(&[s, s], 1.0), Err(PropagationError::DegenerateFit)));
        assert!(matches!(fit_path_loss(&[s], 1.0), Err(PropagationError::DegenerateFit)));
        assert!(matches!(fit_path_loss(&[], 1.0), Err(PropagationError::DegenerateFit)));
    }

    #[test]
    fn fit_noisy_exponent() {
        let truth = PathLossModel::new(1.0, 40.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<SnrSample> = (0..200)
            .map(|_| {
                let d = rng.gen_range(1.0..100.0);
                SnrSample {
                    distance: d,
                    observed_path_loss: truth.path_loss(d).unwrap() + rng.gen_range(-0.5..=0.5),
                }
            })
            .collect();
        let fit = fit_path_loss(&samples, 1.0).unwrap();
        assert!((fit.eta - 2.0).abs() < 0.1, "eta = {}", fit.eta);
    }

    #[test]
    fn csv_ingest() {
        let data = "distance_m,path_loss_db\n1,34\n10, 72.3\n";
        let s = read_samples_csv(data.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].observed_path_loss, 72.3);
        assert!(read_samples_csv("d,pl\n1,2\n".as_bytes()).is_err());
        assert!(read_samples_csv("distance_m,path_loss_db\n1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn map_single_radio_cell_at_one_meter() {
        let model = PathLossModel::default();
        let r = radio("base", [1.5, 0.5, 0.0], 30.0);
        let bn = BTreeMap::from([(r.id.clone(), f64::INFINITY)]);
        let grid = GridSpec {
            origin: [0.0, 0.0],
            resolution: 1.0,
            width: 3,
            height: 1,
            z: 0.0,
        };
        let map = build_connectivity_map(&[r], &bn, &grid, -90.0, &model).unwrap();
        // cell 0 center (0.5, 0.5) is 1 m from the radio
        assert!((map.get(0, 0) - 86.0).abs() < 1e-12);
        assert!((map.get(2, 0) - 86.0).abs() < 1e-12);
    }

    #[test]
    fn map_clamps_and_caps() {
        let model = PathLossModel::default();
        let weak = radio("w", [0.0, 0.0, 0.0], -100.0);
        let bn = BTreeMap::from([(weak.id.clone(), f64::INFINITY)]);
        let grid = GridSpec {
            origin: [0.0, 0.0],
            resolution: 5.0,
            width: 4,
            height: 4,
            z: 0.0,
        };
        let map = build_connectivity_map(std::slice::from_ref(&weak), &bn, &grid, -90.0, &model).unwrap();
        assert!(map.cells.iter().all(|&v| v == 0.0));

        // A near radio with a poor backbone loses to a farther radio with a
        // good one.
        let near = radio("near", [0.0, 0.0, 0.0], 30.0);
        let far = radio("far", [20.0, 0.0, 0.0], 30.0);
        let bn = BTreeMap::from([(near.id.clone(), 10.0), (far.id.clone(), f64::INFINITY)]);
        let g = GridSpec {
            origin: [0.0, -0.5],
            resolution: 1.0,
            width: 1,
            height: 1,
            z: 0.0,
        };
        let map = build_connectivity_map(&[near.clone(), far.clone()], &bn, &g, -90.0, &model)
            .unwrap();
        let c = [0.5, 0.0, 0.0];
        let a = 10.0f64.min(predict_snr(&near, &c, -90.0, &model).unwrap());
        let b = predict_snr(&far, &c, -90.0, &model).unwrap();
        assert!(b > a);
        assert_eq!(map.get(0, 0), a.max(b).max(0.0));
    }

    #[test]
    fn map_errors() {
        let model = PathLossModel::default();
        let grid = GridSpec {
            origin: [0.0, 0.0],
            resolution: 1.0,
            width: 2,
            height: 2,
            z: 0.0,
        };
        assert!(matches!(
            build_connectivity_map(&[], &BTreeMap::new(), &grid, -90.0, &model),
            Err(PropagationError::EmptyBackbone)
        ));
        let r = radio("x", [0.0, 0.0, 0.0], 30.0);
        assert!(matches!(
            build_connectivity_map(&[r], &BTreeMap::new(), &grid, -90.0, &model),
            Err(PropagationError::MissingBottleneck(_))
        ));
    }

    #[test]
    fn csv_and_svg_export() {
        let grid = ConnectivityGrid {
            origin: [0.0, 0.0],
            resolution: 1.0,
            width: 2,
            height: 2,
            cells: vec![1.0, 2.345, 30.0, 0.0],
        };
        assert_eq!(grid.to_csv(), "1.00,2.35\n30.00,0.00\n");
        let svg = grid.to_svg(20.0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("20 dB strong"));
        assert_eq!(svg.matches("<rect").count(), 4 + 32);
    }

    proptest! {
        #[test]
        fn path_loss_strictly_increasing(
            a in 0.01f64..1e4, b in 0.01f64..1e4,
            eta in 0.5f64..6.0, pl in 0.0f64..80.0, d0 in 0.1f64..10.0,
        ) {
            prop_assume!((a - b).abs() > 1e-9 * a.max(b));
            let m = PathLossModel::new(d0, pl, eta).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(m.path_loss(lo).unwrap() < m.path_loss(hi).unwrap());
        }

        #[test]
        fn snr_reconstructs_tx_power(
            tx in -30f64..40.0, noise in -120f64..0.0,
            x in 0.5f64..300.0, y in -50f64..50.0,
        ) {
            let m = PathLossModel::default();
            let r = radio("r", [0.0, 0.0, 0.0], tx);
            let p = [x, y, 0.0];
            let snr = predict_snr(&r, &p, noise, &m).unwrap();
            let back = snr + m.path_loss(distance(&r.position, &p)).unwrap() + noise;
            prop_assert!((back - tx).abs() < 1e-9);
        }

        #[test]
        fn capacity_monotone_and_linear(
            a in -40f64..60.0, b in -40f64..60.0, bw in 1e3f64..1e8, k in 0.1f64..10.0,
        ) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(shannon_capacity(bw, lo).unwrap() < shannon_capacity(bw, hi).unwrap());
            let c1 = shannon_capacity(bw, a).unwrap();
            let ck = shannon_capacity(k * bw, a).unwrap();
            prop_assert!((ck - k * c1).abs() <= 1e-9 * ck.abs().max(1.0));
        }

        #[test]
        fn fit_round_trips_noiseless_models(
            eta in 1.0f64..6.0, pl in 0.0f64..80.0, d0 in 0.5f64..5.0,
        ) {
            let truth = PathLossModel::new(d0, pl, eta).unwrap();
            let samples: Vec<SnrSample> = [1.0, 2.0, 5.0, 10.0, 50.0, 120.0]
                .iter()
                .map(|&d| SnrSample { distance: d, observed_path_loss: truth.path_loss(d).unwrap() })
                .collect();
            let fit = fit_path_loss(&samples, d0).unwrap();
            prop_assert!((fit.eta - eta).abs() < 1e-9);
            prop_assert!((fit.pl_d0 - pl).abs() < 1e-9);
        }

        #[test]
        fn map_invariant_to_backbone_order(
            positions in proptest::collection::vec((0f64..40.0, 0f64..40.0, 0f64..40.0), 1..5),
            seed in any::<u64>(),
        ) {
            let model = PathLossModel::default();
            let radios: Vec<RadioSpec> = positions
                .iter()
                .enumerate()
                .map(|(i, &(x, y, bn))| {
                    let mut r = radio(&format!("r{i}"), [x, y, 0.0], 20.0);
                    r.noise_level = bn;
                    r
                })
                .collect();
            let bns: BTreeMap<NodeId, f64> =
                radios.iter().map(|r| (r.id.clone(), r.noise_level)).collect();
            let grid = GridSpec { origin: [0.0, 0.0], resolution: 4.0, width: 10, height: 10, z: 0.0 };
            let a = build_connectivity_map(&radios, &bns, &grid, -90.0, &model).unwrap();
            let mut shuffled = radios.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng);
            let b = build_connectivity_map(&shuffled, &bns, &grid, -90.0, &model).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
