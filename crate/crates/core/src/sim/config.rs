use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanistic::ToolConfig;
use crate::Vec3;

/// Rectangular slab seen in cross-section: columns along `y`, height along
/// `z`, thickness along the tool axis `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialConfig {
    pub surface_z_mm: f64,
    /// `[y_min, y_max]`.
    pub extent_mm: [f64; 2],
    pub depth_mm: f64,
    pub thickness_mm: f64,
    pub grid_mm: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            surface_z_mm: 0.0,
            extent_mm: [-60.0, 0.0],
            depth_mm: 10.0,
            thickness_mm: 1.0,
            grid_mm: 0.1,
        }
    }
}

/// Straight reference path for the tool centre at zero depth of cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub start: Vec3,
    pub end: Vec3,
    /// Nominal feed `v_n` (mm/s).
    pub speed_nominal: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            start: [0.0, 20.0, 25.0],
            end: [0.0, -70.0, 25.0],
            speed_nominal: 12.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// 1/mm³.
    pub q_mrv: f64,
    /// 1/s.
    pub q_cut: f64,
    /// Diagonal, 1/mm².
    pub q_d: Vec3,
    /// Diagonal, 1/N².
    pub q_f: Vec3,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            q_mrv: 1e-2,
            q_cut: 0.05,
            q_d: [1e-2; 3],
            q_f: [1e-4; 3],
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.q_mrv, self.q_cut].into_iter().chain(self.q_d).chain(self.q_f);
        for w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config("reward weights must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    /// Per-axis position gain range (1/s²).
    pub kp_min: f64,
    pub kp_max: f64,
    pub kp_rate_max: f64,
    /// `t_Δ` range.
    pub feed_adj: [f64; 2],
    /// 1/s.
    pub feed_rate_max: f64,
    /// `n_Δ` range (mm).
    pub doc: [f64; 2],
    /// mm/s.
    pub doc_rate_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            kp_min: 100.0,
            kp_max: 4000.0,
            kp_rate_max: 4000.0,
            feed_adj: [-1.0, 1.0],
            feed_rate_max: 2.0,
            doc: [0.0, 3.0],
            doc_rate_max: 2.0,
        }
    }
}

impl ActionBounds {
    /// Maximum magnitude of each action component.
    pub fn rate_limits(&self) -> [f64; 5] {
        [
            self.kp_rate_max,
            self.kp_rate_max,
            self.kp_rate_max,
            self.feed_rate_max,
            self.doc_rate_max,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kp_min > 0.0
            && self.kp_max >= self.kp_min
            && self.feed_adj[0] >= -1.0
            && self.feed_adj[1] >= self.feed_adj[0]
            && self.doc[1] >= self.doc[0]
            && self.rate_limits().iter().all(|r| r.is_finite() && *r > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent action bounds {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub kp: Vec3,
    pub t_delta: f64,
    pub n_delta: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            kp: [1000.0; 3],
            t_delta: 0.0,
            n_delta: 0.0,
        }
    }
}

/// Per-episode multipliers on the mechanistic constants, drawn uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantRanges {
    pub k_c_scale: [f64; 2],
    pub k_e_scale: [f64; 2],
}

impl Default for ConstantRanges {
    fn default() -> Self {
        Self {
            k_c_scale: [0.8, 1.2],
            k_e_scale: [0.8, 1.2],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_model_path: Option<PathBuf>,
    /// Standard deviation of the i.i.d. sensor noise (N).
    #[serde(default)]
    pub sensor_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    #[serde(default)]
    pub tool: ToolConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub weights: RewardWeights,
    #[serde(default)]
    pub bounds: ActionBounds,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub constants: ConstantRanges,
    /// Policy period (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Episode time limit (s).
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Converts force (N) to tracking acceleration (mm/s²) as `1000 F / m`.
    #[serde(default = "default_mass")]
    pub effective_mass_kg: f64,
    /// Along-path distance from the end at which the cut counts as complete (mm).
    #[serde(default = "default_end_tolerance")]
    pub end_tolerance_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentationConfig>,
}

fn default_dt() -> f64 {
    0.02
}
fn default_substeps() -> usize {
    20
}
fn default_horizon() -> f64 {
    15.0
}
fn default_mass() -> f64 {
    10.0
}
fn default_end_tolerance() -> f64 {
    1.0
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            tool: ToolConfig::default(),
            material: MaterialConfig::default(),
            path: PathConfig::default(),
            weights: RewardWeights::default(),
            bounds: ActionBounds::default(),
            initial: InitialState::default(),
            constants: ConstantRanges::default(),
            dt: default_dt(),
            substeps: default_substeps(),
            horizon: default_horizon(),
            effective_mass_kg: default_mass(),
            end_tolerance_mm: default_end_tolerance(),
            augmentation: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.tool.tool()?;
        self.weights.validate()?;
        self.bounds.validate()?;
        let m = &self.material;
        if !(m.grid_mm > 0.0 && m.thickness_mm > 0.0 && m.depth_mm >= 0.0 && m.extent_mm[1] >= m.extent_mm[0]) {
            return Err(Error::Config("material geometry must be non-degenerate".into()));
        }
        let len = self.path_length();
        if !(len > 0.0 && len.is_finite()) || !(self.path.speed_nominal > 0.0) {
            return Err(Error::Config("path needs distinct endpoints and a positive nominal speed".into()));
        }
        if !(self.dt > 0.0) || self.substeps == 0 || !(self.horizon > 0.0) || !(self.effective_mass_kg > 0.0) {
            return Err(Error::Config("dt, substeps, horizon and mass must be positive".into()));
        }
        for range in [self.constants.k_c_scale, self.constants.k_e_scale] {
            if !(range[0] >= 0.0 && range[1] >= range[0]) {
                return Err(Error::Config("constant scale ranges must be ordered and non-negative".into()));
            }
        }
        let i = &self.initial;
        let b = &self.bounds;
        if i.kp.iter().any(|k| *k < b.kp_min || *k > b.kp_max)
            || i.t_delta < b.feed_adj[0]
            || i.t_delta > b.feed_adj[1]
            || i.n_delta < b.doc[0]
            || i.n_delta > b.doc[1]
        {
            return Err(Error::Config("initial state outside action bounds".into()));
        }
        if let Some(aug) = &self.augmentation {
            if !(aug.sensor_sigma >= 0.0) {
                return Err(Error::Config("sensor sigma must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn path_length(&self) -> f64 {
        let d: Vec3 = std::array::from_fn(|i| self.path.end[i] - self.path.start[i]);
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Number of policy steps before the time limit.
    pub fn horizon_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Policy-step times `k·dt`, `k = 0..=horizon_steps`.
    pub fn episode_times(&self) -> Vec<f64> {
        (0..=self.horizon_steps()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if let Some(aug) = config.augmentation.as_mut() {
            if let Some(gp) = aug.gp_model_path.as_mut() {
                if gp.is_relative() {
                    *gp = path.parent().unwrap_or(Path::new(".")).join(&*gp);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
