use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    coarse_align, dtw_samples, normalize, reindex, shift_by_lag, DtwOptions, ForceSeries,
    NormalizedSeries, NOMINAL_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceChoice {
    /// The longest trial (first one on ties).
    #[default]
    Longest,
    Index(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub reference: ReferenceChoice,
    pub open_ended: bool,
    pub window: Option<usize>,
    /// Sample rate used to detect and repair timestamp jitter.
    pub rate_hz: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            reference: ReferenceChoice::Longest,
            open_ended: true,
            window: None,
            rate_hz: NOMINAL_RATE_HZ,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesProvenance {
    pub file: String,
    pub lag: isize,
    pub dtw_cost: f64,
}

/// Trials re-indexed onto the reference trial's time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedDataset {
    /// Seconds from the first reference sample.
    pub time_grid: Vec<f64>,
    pub series: Vec<NormalizedSeries>,
    pub reference_index: usize,
    pub provenance: Vec<SeriesProvenance>,
    /// Standard-deviation convention used by the normalization.
    pub stddev_convention: String,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Series `i` back in newtons.
    pub fn denormalized(&self, i: usize) -> Vec<Vec3> {
        self.series[i].denormalize()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Normalize, coarse-align and DTW-align every trial onto one reference.
///
/// `names` labels the provenance records; trial indices are used when absent.
pub fn build_dataset(
    raw: &[ForceSeries],
    names: Option<&[String]>,
    config: &DatasetConfig,
) -> Result<AlignedDataset> {
    if raw.is_empty() {
        return Err(Error::invalid("dataset needs at least one series"));
    }
    if let Some(names) = names {
        if names.len() != raw.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.len(),
                found: names.len(),
            });
        }
    }
    let reference_index = match config.reference {
        ReferenceChoice::Longest => raw
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if s.len() > raw[best].len() { i } else { best }),
        ReferenceChoice::Index(i) if i < raw.len() => i,
        ReferenceChoice::Index(i) => {
            return Err(Error::invalid(format!(
                "reference index {i} out of range for {} series",
                raw.len()
            )))
        }
    };

    let normalized: Vec<NormalizedSeries> = raw
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            s.regularized(config.rate_hz)
                .and_then(|s| normalize(&s))
                .map_err(|e| e.in_series(i))
        })
        .collect::<Result<_>>()?;

    let reference = &normalized[reference_index];
    let t0 = reference.timestamps[0];
    let time_grid: Vec<f64> = reference.timestamps.iter().map(|t| t - t0).collect();
    let opts = DtwOptions {
        open_ended: config.open_ended,
        window: config.window,
    };

    let aligned: Vec<(NormalizedSeries, isize, f64)> = normalized
        .par_iter()
        .enumerate()
        .map(|(i, query)| {
            if i == reference_index {
                let mut own = query.clone();
                own.timestamps = time_grid.clone();
                return Ok((own, 0, 0.0));
            }
            let run = || -> Result<_> {
                let lag = coarse_align(reference, query)?;
                let shifted = NormalizedSeries {
                    values: shift_by_lag(&query.values, lag),
                    timestamps: Vec::new(),
                    ..query.clone()
                };
                let path = dtw_samples(&reference.values, &shifted.values, &opts)?;
                let series = reindex(&shifted, &path, &time_grid)?;
                Ok((series, lag, path.cost))
            };
            run().map_err(|e| e.in_series(i))
        })
        .collect::<Result<_>>()?;

    let mut series = Vec::with_capacity(aligned.len());
    let mut provenance = Vec::with_capacity(aligned.len());
    for (i, (s, lag, dtw_cost)) in aligned.into_iter().enumerate() {
        series.push(s);
        provenance.push(SeriesProvenance {
            file: names.map_or_else(|| format!("series-{i}"), |n| n[i].clone()),
            lag,
            dtw_cost,
        });
    }
    Ok(AlignedDataset {
        time_grid,
        series,
        reference_index,
        provenance,
        stddev_convention: "population".into(),
    })
}
