//! Force recordings and their temporal alignment.
//!
//! Raw trials are standardized per axis, coarsely aligned by maximizing the
//! summed cross-correlation, then finely aligned with open-ended
//! symmetric2 dynamic time warping and re-indexed onto the reference grid.

mod dataset;
mod dtw;
mod xcorr;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub use dataset::{build_dataset, AlignedDataset, DatasetConfig, ReferenceChoice, SeriesProvenance};
pub use dtw::{dtw_align, dtw_samples, reindex, DtwOptions, WarpPath};
pub use xcorr::{coarse_align, cross_correlation, shift_by_lag};

/// Nominal force-sensor sample rate.
pub const NOMINAL_RATE_HZ: f64 = 500.0;

/// A timestamped three-axis force recording (seconds, newtons).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSeries {
    timestamps: Vec<f64>,
    forces: Vec<Vec3>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    fx: f64,
    fy: f64,
    fz: f64,
}

impl ForceSeries {
    pub fn new(timestamps: Vec<f64>, forces: Vec<Vec3>) -> Result<Self> {
        if timestamps.len() != forces.len() {
            return Err(Error::DimensionMismatch {
                expected: timestamps.len(),
                found: forces.len(),
            });
        }
        if timestamps.len() < 2 {
            return Err(Error::invalid("force series needs at least two samples"));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("timestamps"));
        }
        if forces.iter().flatten().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("forces"));
        }
        if let Some(k) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at sample {}",
                k + 1
            )));
        }
        Ok(Self { timestamps, forces })
    }

    /// Evenly spaced series starting at `t0`.
    pub fn uniform(t0: f64, rate_hz: f64, forces: Vec<Vec3>) -> Result<Self> {
        let timestamps = (0..forces.len()).map(|k| t0 + k as f64 / rate_hz).collect();
        Self::new(timestamps, forces)
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn forces(&self) -> &[Vec3] {
        &self.forces
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut timestamps = Vec::new();
        let mut forces = Vec::new();
        for row in reader.deserialize::<CsvRow>() {
            let row = row.map_err(csv_err)?;
            timestamps.push(row.t);
            forces.push([row.fx, row.fy, row.fz]);
        }
        Self::new(timestamps, forces).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        for (t, f) in self.timestamps.iter().zip(&self.forces) {
            writer
                .serialize(CsvRow {
                    t: *t,
                    fx: f[0],
                    fy: f[1],
                    fz: f[2],
                })
                .map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    /// Largest deviation of a sample interval from `1 / rate_hz`, as a
    /// fraction of the nominal period.
    pub fn max_jitter(&self, rate_hz: f64) -> f64 {
        let period = 1.0 / rate_hz;
        self.timestamps
            .windows(2)
            .map(|w| ((w[1] - w[0]) - period).abs() / period)
            .fold(0.0, f64::max)
    }

    /// Linear interpolation onto `t0 + k / rate_hz` up to the last timestamp.
    pub fn resample(&self, rate_hz: f64) -> Result<Self> {
        let t0 = self.timestamps[0];
        let span = self.timestamps[self.len() - 1] - t0;
        let n = (span * rate_hz + 1e-9).floor() as usize + 1;
        let mut forces = Vec::with_capacity(n);
        let mut seg = 0;
        for k in 0..n {
            let t = t0 + k as f64 / rate_hz;
            while seg + 2 < self.len() && self.timestamps[seg + 1] < t {
                seg += 1;
            }
            let (ta, tb) = (self.timestamps[seg], self.timestamps[seg + 1]);
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            let (fa, fb) = (self.forces[seg], self.forces[seg + 1]);
            forces.push(std::array::from_fn(|a| fa[a] + w * (fb[a] - fa[a])));
        }
        Self::uniform(t0, rate_hz, forces)
    }

    /// Resample onto the nominal grid when timestamp jitter exceeds 1% of the
    /// sample period; otherwise return an unchanged copy.
    pub fn regularized(&self, rate_hz: f64) -> Result<Self> {
        if self.max_jitter(rate_hz) > 0.01 {
            self.resample(rate_hz)
        } else {
            Ok(self.clone())
        }
    }
}

/// Per-axis standardized series. Standard deviations use the population
/// convention (divide by N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub timestamps: Vec<f64>,
    pub values: Vec<Vec3>,
    pub mean: Vec3,
    pub stddev: Vec3,
    /// Axes whose standard deviation was zero; those were only mean-subtracted.
    pub zero_stddev: [bool; 3],
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Undo the standardization using the stored moments.
    pub fn denormalize(&self) -> Vec<Vec3> {
        self.values
            .iter()
            .map(|v| {
                std::array::from_fn(|a| {
                    let scale = if self.zero_stddev[a] { 1.0 } else { self.stddev[a] };
                    v[a] * scale + self.mean[a]
                })
            })
            .collect()
    }
}

/// Population mean and standard deviation per axis.
pub fn moments(samples: &[Vec3]) -> (Vec3, Vec3) {
    let n = samples.len() as f64;
    let mean: Vec3 = std::array::from_fn(|a| samples.iter().map(|s| s[a]).sum::<f64>() / n);
    let std: Vec3 = std::array::from_fn(|a| {
        (samples.iter().map(|s| (s[a] - mean[a]).powi(2)).sum::<f64>() / n).sqrt()
    });
    (mean, std)
}

/// Standardize raw samples; see [`normalize`].
pub fn standardize(timestamps: Vec<f64>, samples: &[Vec3]) -> Result<NormalizedSeries> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot normalize an empty series"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series samples"));
    }
    let (mean, stddev) = moments(samples);
    let zero_stddev: [bool; 3] =
        std::array::from_fn(|a| stddev[a] <= 1e-12 * mean[a].abs().max(1.0));
    let values = samples
        .iter()
        .map(|s| {
            std::array::from_fn(|a| {
                let centred = s[a] - mean[a];
                if zero_stddev[a] {
                    centred
                } else {
                    centred / stddev[a]
                }
            })
        })
        .collect();
    Ok(NormalizedSeries {
        timestamps,
        values,
        mean,
        stddev,
        zero_stddev,
    })
}

/// Zero-mean, unit-variance scaling of each force axis.
pub fn normalize(series: &ForceSeries) -> Result<NormalizedSeries> {
    standardize(series.timestamps.clone(), &series.forces)
}
