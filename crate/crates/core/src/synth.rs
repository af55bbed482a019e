//! Synthetic force recordings with known ground truth.
//!
//! Every trial observes the same underlying signal: a revolution-averaged
//! mechanistic force that ramps in as the tool enters the material, plus a
//! periodic disturbance drawn once from a periodic-kernel GP prior. Each
//! trial is then delayed by an integer number of samples, smoothly
//! time-warped and corrupted with i.i.d. sensor noise.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::PeriodicKernel;
use crate::mechanistic::{mean_force_full_engagement, tool_to_base, SpindleState, ToolConfig};
use crate::timeseries::ForceSeries;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub trials: usize,
    pub samples: usize,
    pub rate_hz: f64,
    /// Disturbance kernel period (s) and length scale.
    pub period: f64,
    pub length_scale: f64,
    /// Prior standard deviation of the disturbance per axis (N).
    pub disturbance_std: Vec3,
    /// Sensor noise standard deviation (N).
    pub noise_std: f64,
    /// Delays are drawn uniformly from `-max_lag..=max_lag` samples.
    pub max_lag: usize,
    /// Warp amplitudes are drawn uniformly from `[-max_warp, max_warp]` s.
    pub max_warp: f64,
    pub tool: ToolConfig,
    pub feed_mm_s: f64,
    /// Fraction of the full-immersion mean force reached in steady cutting.
    pub engagement: f64,
    /// Start and duration of the entry ramp (s).
    pub entry_start: f64,
    pub entry_duration: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            trials: 14,
            samples: 2500,
            rate_hz: 500.0,
            period: 0.2,
            length_scale: 1.0,
            disturbance_std: [0.5, 1.5, 1.0],
            noise_std: 0.2,
            max_lag: 50,
            max_warp: 0.01,
            tool: ToolConfig::default(),
            feed_mm_s: 12.5,
            engagement: 0.2,
            entry_start: 0.5,
            entry_duration: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.samples < 2 {
            return Err(Error::Config("need at least one trial of two samples".into()));
        }
        if !(self.rate_hz > 0.0 && self.period > 0.0 && self.length_scale > 0.0) {
            return Err(Error::Config("rate, period and length scale must be positive".into()));
        }
        if self.disturbance_std.iter().any(|s| !(*s >= 0.0)) || !(self.noise_std >= 0.0) {
            return Err(Error::Config("standard deviations must be non-negative".into()));
        }
        if !(self.max_warp >= 0.0 && self.entry_duration > 0.0 && self.engagement >= 0.0) {
            return Err(Error::Config("warp, entry duration and engagement must be non-negative".into()));
        }
        if self.max_lag >= self.samples {
            return Err(Error::Config("max lag must be shorter than a trial".into()));
        }
        self.tool.tool().map(|_| ())
    }

    pub fn kernels(&self) -> [PeriodicKernel; 3] {
        self.disturbance_std.map(|s| PeriodicKernel {
            period: self.period,
            length_scale: self.length_scale,
            signal_variance: s * s,
        })
    }
}

/// Exact draw from a periodic-kernel GP prior, stored as its Fourier
/// expansion so it can be evaluated at any time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSignal {
    pub period: f64,
    /// `(cos, sin)` amplitude of harmonic `k`.
    pub harmonics: Vec<(f64, f64)>,
}

impl PeriodicSignal {
    const HARMONICS: usize = 64;

    /// The kernel is a Fourier series in `τ` with non-negative
    /// coefficients `c_k`; scaling independent normals by `√c_k` gives a
    /// process with exactly that covariance (up to truncation).
    pub fn draw<R: Rng + ?Sized>(kernel: &PeriodicKernel, rng: &mut R) -> Self {
        let n = 4 * Self::HARMONICS;
        let grid: Vec<f64> = (0..n).map(|j| kernel.eval(0.0, kernel.period * j as f64 / n as f64)).collect();
        let harmonics = (0..Self::HARMONICS)
            .map(|k| {
                // trapezoid rule is spectrally accurate for smooth periodic integrands
                let c = grid
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (2.0 * PI * (k * j) as f64 / n as f64).cos())
                    .sum::<f64>()
                    / n as f64;
                let c = if k == 0 { c } else { 2.0 * c };
                // quadrature round-off
                let c = if c > 1e-12 * grid[0] { c } else { 0.0 };
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (c.sqrt() * a, if k == 0 { 0.0 } else { c.sqrt() * b })
            })
            .collect();
        Self {
            period: kernel.period,
            harmonics,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let w = 2.0 * PI * t / self.period;
        self.harmonics
            .iter()
            .enumerate()
            .map(|(k, (a, b))| a * (k as f64 * w).cos() + b * (k as f64 * w).sin())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTruth {
    pub file: String,
    /// Samples by which the trial trails the undelayed signal.
    pub delay_samples: isize,
    /// Amplitude `a` of the warp `τ = t + a sin(π t / T)` (s).
    pub warp_s: f64,
}

/// Ground truth written next to the generated trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub seed: u64,
    pub kernels: [PeriodicKernel; 3],
    pub noise_variance: f64,
    pub disturbance: [PeriodicSignal; 3],
    pub trials: Vec<TrialTruth>,
    /// File holding the mechanistic force on the first trial's time base.
    pub mechanistic_file: String,
}

pub struct SynthData {
    pub trials: Vec<ForceSeries>,
    /// Noise-free mechanistic force on the undelayed time base.
    pub mechanistic: ForceSeries,
    pub truth: SynthTruth,
}

impl SynthData {
    /// Disturbance plus mechanistic force at time `t` of the undelayed
    /// signal.
    pub fn clean_signal(&self, t: f64) -> Vec3 {
        let m = mechanistic_force(&self.truth.config, t);
        std::array::from_fn(|a| m[a] + self.truth.disturbance[a].at(t))
    }

    /// Write `trials/trial_XX.csv`, `mechanistic.csv` and `truth.json` into
    /// `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (series, truth) in self.trials.iter().zip(&self.truth.trials) {
            let path = dir.join(&truth.file);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            series.write_csv(&path)?;
            written.push(path);
        }
        let mech = dir.join(&self.truth.mechanistic_file);
        self.mechanistic.write_csv(&mech)?;
        written.push(mech);
        let path = dir.join(TRUTH_FILE);
        let text = serde_json::to_string_pretty(&self.truth).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

pub const TRUTH_FILE: &str = "truth.json";
/// Subdirectory holding the trial recordings, so it can be passed to
/// alignment as is.
pub const TRIALS_DIR: &str = "trials";

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Revolution-averaged force of the configured cut, scaled by the entry
/// ramp (base frame, N).
pub fn mechanistic_force(config: &SynthConfig, t: f64) -> Vec3 {
    let Ok(tool) = config.tool.tool() else {
        return [0.0; 3];
    };
    let spindle = SpindleState {
        speed_rps: config.tool.spindle_rps,
        feed_mm_s: config.feed_mm_s,
        angle_rad: 0.0,
    };
    let full = mean_force_full_engagement(&tool, &spindle).map_or([0.0; 3], tool_to_base);
    let ramp = config.engagement * smoothstep((t - config.entry_start) / config.entry_duration);
    full.map(|f| ramp * f)
}

/// Generate trials. The first trial is undelayed and unwarped so it can
/// serve as the alignment reference.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<SynthData> {
    config.validate()?;
    let kernels = config.kernels();
    let disturbance: [PeriodicSignal; 3] = std::array::from_fn(|a| {
        PeriodicSignal::draw(&kernels[a], &mut crate::seed::rng(seed, "synth-disturbance", a as u64))
    });
    let duration = config.samples as f64 / config.rate_hz;
    let times: Vec<f64> = (0..config.samples).map(|k| k as f64 / config.rate_hz).collect();
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut trials = Vec::with_capacity(config.trials);
    let mut truths = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let mut rng = crate::seed::rng(seed, "synth-trial", i as u64);
        let (delay, warp) = if i == 0 {
            (0, 0.0)
        } else {
            let lag = config.max_lag as i64;
            (
                rng.random_range(-lag..=lag) as isize,
                if config.max_warp > 0.0 {
                    rng.random_range(-config.max_warp..=config.max_warp)
                } else {
                    0.0
                },
            )
        };
        let forces = times
            .iter()
            .map(|&t| {
                let tau = t - delay as f64 / config.rate_hz + warp * (PI * t / duration).sin();
                let m = mechanistic_force(config, tau);
                std::array::from_fn(|a| m[a] + disturbance[a].at(tau) + rng.sample(noise))
            })
            .collect();
        trials.push(ForceSeries::new(times.clone(), forces)?);
        truths.push(TrialTruth {
            file: format!("{TRIALS_DIR}/trial_{i:02}.csv"),
            delay_samples: delay,
            warp_s: warp,
        });
    }
    let mechanistic = ForceSeries::new(times.clone(), times.iter().map(|&t| mechanistic_force(config, t)).collect())?;
    Ok(SynthData {
        trials,
        mechanistic,
        truth: SynthTruth {
            config: config.clone(),
            seed,
            kernels,
            noise_variance: config.noise_std * config.noise_std,
            disturbance,
            trials: truths,
            mechanistic_file: "mechanistic.csv".into(),
        },
    })
}
