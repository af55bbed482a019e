//! Mechanistic cutting-force model for a fluted rotary tool.
//!
//! Each engaged flute contributes an edge term plus a term linear in the
//! uncut chip thickness, expressed in the flute frame as
//! `(tangential, radial, axial)` and rotated into the tool frame `M`.
//!
//! Frame conventions: `M` has the tool axis along `z`; a flute at angle
//! `θ` has its edge at `(-sin θ, -cos θ, 0)·radius`, so `θ = 0` points at
//! the bottom of the cut and `θ = π/2` points along the feed. The flute
//! frame is rotated by `-θ` about `z_M`. In the simulator's base frame `W`
//! the tool axis is `x`, the feed runs along `-y` and `z` is the surface
//! normal, giving `M → W: (x, y, z) ↦ (y, z, x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolModel {
    pub n_flutes: usize,
    /// Cutting-edge thickness per flute (mm).
    pub edge_thickness_mm: Vec<f64>,
    /// Cutting constants (N/mm²), flute-frame ordering.
    pub k_c: Vec3,
    /// Edge constants (N/mm).
    pub k_e: Vec3,
    pub radius_mm: f64,
    /// Angular offset of each flute (rad).
    pub phase_offsets: Vec<f64>,
}

impl ToolModel {
    /// Tool with one shared edge thickness and uniformly spaced flutes.
    pub fn new(n_flutes: usize, edge_thickness_mm: f64, k_c: Vec3, k_e: Vec3, radius_mm: f64) -> Result<Self> {
        let tool = Self {
            n_flutes,
            edge_thickness_mm: vec![edge_thickness_mm; n_flutes],
            k_c,
            k_e,
            radius_mm,
            phase_offsets: uniform_offsets(n_flutes),
        };
        tool.validate()?;
        Ok(tool)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_flutes == 0 {
            return Err(Error::Config("tool needs at least one flute".into()));
        }
        if self.edge_thickness_mm.len() != self.n_flutes || self.phase_offsets.len() != self.n_flutes {
            return Err(Error::Config(format!(
                "per-flute arrays must have {} entries",
                self.n_flutes
            )));
        }
        if self.edge_thickness_mm.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config("edge thickness must be positive".into()));
        }
        if !(self.radius_mm > 0.0) {
            return Err(Error::Config("tool radius must be positive".into()));
        }
        if self.k_c.iter().chain(&self.k_e).any(|k| !k.is_finite()) {
            return Err(Error::Config("mechanistic constants must be finite".into()));
        }
        Ok(())
    }

    /// Same geometry with both constant vectors multiplied.
    pub fn with_scaled_constants(&self, k_c_scale: f64, k_e_scale: f64) -> Self {
        Self {
            k_c: self.k_c.map(|k| k * k_c_scale),
            k_e: self.k_e.map(|k| k * k_e_scale),
            ..self.clone()
        }
    }

    /// Angle of flute `p` at the current spindle rotation.
    pub fn flute_angle(&self, spindle: &SpindleState, p: usize) -> f64 {
        spindle.angle_rad + self.phase_offsets[p]
    }
}

pub fn uniform_offsets(n_flutes: usize) -> Vec<f64> {
    (0..n_flutes)
        .map(|p| 2.0 * PI * p as f64 / n_flutes as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpindleState {
    pub speed_rps: f64,
    pub feed_mm_s: f64,
    /// Accumulated rotation (rad).
    pub angle_rad: f64,
}

impl SpindleState {
    pub fn advance(&mut self, dt: f64) {
        self.angle_rad = (self.angle_rad + 2.0 * PI * self.speed_rps * dt).rem_euclid(2.0 * PI);
    }
}

/// Which flutes are in contact with the workpiece.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engagement(pub Vec<bool>);

impl Engagement {
    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&g| g).count()
    }
}

/// Uncut chip thickness `sin θ · v / (N_p ω)` in mm, zero while the flute
/// is leaving the cut.
pub fn chip_thickness(theta: f64, spindle: &SpindleState, n_flutes: usize) -> Result<f64> {
    if !(spindle.speed_rps > 0.0) {
        return Err(Error::invalid("spindle speed must be positive"));
    }
    let h = theta.sin() * spindle.feed_mm_s / (n_flutes as f64 * spindle.speed_rps);
    Ok(h.max(0.0))
}

/// Flute-frame force `b·k_e + b·k_c·h`.
pub fn flute_force(tool: &ToolModel, flute: usize, h: f64) -> Vec3 {
    let b = tool.edge_thickness_mm[flute];
    std::array::from_fn(|a| b * tool.k_e[a] + b * tool.k_c[a] * h)
}

/// Rotate a flute-frame vector into the tool frame.
pub fn flute_to_tool(theta: f64, f: Vec3) -> Vec3 {
    let (s, c) = theta.sin_cos();
    [f[0] * c + f[1] * s, -f[0] * s + f[1] * c, f[2]]
}

pub fn tool_to_base(f: Vec3) -> Vec3 {
    [f[2], f[0], f[1]]
}

/// Edge position of a flute at angle `θ`, relative to the tool centre, in
/// the base-frame `(y, z)` plane (mm).
pub fn edge_offset(radius: f64, theta: f64) -> (f64, f64) {
    (-radius * theta.sin(), -radius * theta.cos())
}

/// Sum of the engaged flute forces in the tool frame.
pub fn total_force(tool: &ToolModel, spindle: &SpindleState, engagement: &Engagement) -> Result<Vec3> {
    if engagement.0.len() != tool.n_flutes {
        return Err(Error::DimensionMismatch {
            expected: tool.n_flutes,
            found: engagement.0.len(),
        });
    }
    let mut total = [0.0; 3];
    for (p, _) in engagement.0.iter().enumerate().filter(|(_, &g)| g) {
        let theta = tool.flute_angle(spindle, p);
        let h = chip_thickness(theta, spindle, tool.n_flutes)?;
        let f = flute_to_tool(theta, flute_force(tool, p, h));
        for a in 0..3 {
            total[a] += f[a];
        }
    }
    Ok(total)
}

/// Occupied workpiece region in the base-frame `(y, z)` plane.
pub trait MaterialRegion {
    fn contains(&self, y: f64, z: f64) -> bool;
}

/// A flute is engaged when its edge lies inside material and it is cutting
/// a chip of positive thickness.
pub fn engagement_from_geometry(
    centre_yz: (f64, f64),
    material: &impl MaterialRegion,
    tool: &ToolModel,
    spindle: &SpindleState,
) -> Engagement {
    Engagement(
        (0..tool.n_flutes)
            .map(|p| {
                let theta = tool.flute_angle(spindle, p);
                if theta.sin() <= 0.0 || spindle.feed_mm_s <= 0.0 {
                    return false;
                }
                let (dy, dz) = edge_offset(tool.radius_mm, theta);
                material.contains(centre_yz.0 + dy, centre_yz.1 + dz)
            })
            .collect(),
    )
}

/// Closed-form revolution average of [`total_force`] with every flute
/// engaged (tool frame).
pub fn mean_force_full_engagement(tool: &ToolModel, spindle: &SpindleState) -> Result<Vec3> {
    if !(spindle.speed_rps > 0.0) {
        return Err(Error::invalid("spindle speed must be positive"));
    }
    let feed_per_tooth = spindle.feed_mm_s / (tool.n_flutes as f64 * spindle.speed_rps);
    let mut mean = [0.0; 3];
    for &b in &tool.edge_thickness_mm {
        // ∫ max(0, sin θ) R(θ) dθ / 2π over a revolution
        mean[0] += b * tool.k_c[1] * feed_per_tooth / 4.0;
        mean[1] -= b * tool.k_c[0] * feed_per_tooth / 4.0;
        mean[2] += b * tool.k_e[2] + b * tool.k_c[2] * feed_per_tooth / PI;
    }
    Ok(mean)
}

/// JSON tool description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    pub n_flutes: usize,
    pub edge_thickness_mm: f64,
    pub k_c: Vec3,
    pub k_e: Vec3,
    pub tool_radius_mm: f64,
    pub spindle_rps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_offsets: Option<Vec<f64>>,
}

impl ToolConfig {
    pub fn tool(&self) -> Result<ToolModel> {
        let mut tool = ToolModel::new(
            self.n_flutes,
            self.edge_thickness_mm,
            self.k_c,
            self.k_e,
            self.tool_radius_mm,
        )?;
        if let Some(offsets) = &self.phase_offsets {
            tool.phase_offsets = offsets.clone();
            tool.validate()?;
        }
        if !(self.spindle_rps > 0.0) {
            return Err(Error::Config("spindle speed must be positive".into()));
        }
        Ok(tool)
    }
}

impl Default for ToolConfig {
    /// A 50 mm slitting saw with 12 teeth cutting a soft material.
    fn default() -> Self {
        Self {
            n_flutes: 12,
            edge_thickness_mm: 1.0,
            k_c: [220.0, 90.0, 15.0],
            k_e: [2.0, 1.5, 0.2],
            tool_radius_mm: 25.0,
            spindle_rps: 25.0,
            phase_offsets: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct HalfPlane {
        surface_z: f64,
    }

    impl MaterialRegion for HalfPlane {
        fn contains(&self, _y: f64, z: f64) -> bool {
            z <= self.surface_z
        }
    }

    /// Material below `surface_z` and ahead of (`y <=`) `front_y`.
    struct Quadrant {
        surface_z: f64,
        front_y: f64,
    }

    impl MaterialRegion for Quadrant {
        fn contains(&self, y: f64, z: f64) -> bool {
            z <= self.surface_z + 1e-9 && y <= self.front_y + 1e-9
        }
    }

    fn spindle(feed: f64, angle: f64) -> SpindleState {
        SpindleState {
            speed_rps: 25.0,
            feed_mm_s: feed,
            angle_rad: angle,
        }
    }

    #[test]
    fn chip_thickness_examples() {
        let s = spindle(12.5, 0.0);
        assert_eq!(chip_thickness(0.0, &s, 4).unwrap(), 0.0);
        assert!((chip_thickness(PI / 2.0, &s, 4).unwrap() - 0.125).abs() < 1e-15);
        assert!(chip_thickness(PI, &s, 4).unwrap().abs() < 1e-15);
        assert_eq!(chip_thickness(1.5 * PI, &s, 4).unwrap(), 0.0);
        let stopped = SpindleState { speed_rps: 0.0, ..s };
        assert!(chip_thickness(1.0, &stopped, 4).is_err());
    }

    #[test]
    fn flute_force_examples() {
        let tool = ToolModel::new(1, 2.0, [10.0, 5.0, 0.0], [1.0, 0.0, 0.0], 10.0).unwrap();
        let f = flute_force(&tool, 0, 0.1);
        for (x, y) in f.iter().zip([4.0, 1.0, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(flute_force(&tool, 0, 0.0), [2.0, 0.0, 0.0]);
        let no_edge = ToolModel::new(1, 2.0, [10.0, 5.0, 3.0], [0.0; 3], 10.0).unwrap();
        let (f1, f2) = (flute_force(&no_edge, 0, 0.05), flute_force(&no_edge, 0, 0.1));
        for a in 0..3 {
            assert!((f2[a] - 2.0 * f1[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn no_engagement_means_no_force() {
        let tool = ToolConfig::default().tool().unwrap();
        let f = total_force(&tool, &spindle(20.0, 0.3), &Engagement::none(tool.n_flutes)).unwrap();
        assert_eq!(f, [0.0; 3]);
        assert!(total_force(&tool, &spindle(20.0, 0.3), &Engagement::none(3)).is_err());
    }

    #[test]
    fn single_flute_at_zero_is_pure_edge_force() {
        let tool = ToolModel::new(4, 1.5, [100.0, 40.0, 5.0], [2.0, 1.0, 0.5], 10.0).unwrap();
        let mut g = Engagement::none(4);
        g.0[0] = true;
        let f = total_force(&tool, &spindle(12.5, 0.0), &g).unwrap();
        assert_eq!(f, flute_to_tool(0.0, [3.0, 1.5, 0.75]));
        assert_eq!(f, [3.0, 1.5, 0.75]);
    }

    #[test]
    fn full_engagement_is_flute_periodic() {
        let tool = ToolModel::new(4, 1.0, [200.0, 80.0, 10.0], [2.0, 1.0, 0.2], 20.0).unwrap();
        let g = Engagement::all(4);
        for k in 0..50 {
            let angle = k as f64 * 0.137;
            let a = total_force(&tool, &spindle(15.0, angle), &g).unwrap();
            let b = total_force(&tool, &spindle(15.0, angle + PI / 2.0), &g).unwrap();
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn doubling_constants_doubles_force() {
        let tool = ToolModel::new(3, 1.0, [150.0, 60.0, 10.0], [2.0, 1.0, 0.3], 15.0).unwrap();
        let twice = tool.with_scaled_constants(2.0, 2.0);
        let mut g = Engagement::all(3);
        g.0[1] = false;
        let s = spindle(11.0, 0.4);
        let (a, b) = (total_force(&tool, &s, &g).unwrap(), total_force(&twice, &s, &g).unwrap());
        for i in 0..3 {
            assert_eq!(b[i], 2.0 * a[i]);
        }
    }

    #[test]
    fn deep_tool_engages_every_cutting_flute() {
        let tool = ToolModel::new(8, 1.0, [1.0; 3], [1.0; 3], 5.0).unwrap();
        let material = HalfPlane { surface_z: 0.0 };
        for k in 0..20 {
            let s = spindle(10.0, k as f64 * 0.29);
            let g = engagement_from_geometry((0.0, -6.0), &material, &tool, &s);
            for p in 0..8 {
                assert_eq!(g.0[p], tool.flute_angle(&s, p).sin() > 0.0);
            }
            let outside = engagement_from_geometry((0.0, 6.0), &material, &tool, &s);
            assert_eq!(outside.count(), 0);
        }
    }

    #[test]
    fn half_immersion_arc_is_first_quadrant() {
        // Centre at the surface and at the material front: radial immersion
        // equals the radius.
        let tool = ToolModel::new(1, 1.0, [1.0; 3], [1.0; 3], 10.0).unwrap();
        let material = Quadrant { surface_z: 0.0, front_y: 0.0 };
        for k in 0..720 {
            let theta = k as f64 * PI / 360.0;
            let s = spindle(10.0, theta);
            let engaged = engagement_from_geometry((0.0, 0.0), &material, &tool, &s).0[0];
            let (dy, dz) = edge_offset(10.0, theta);
            let oracle = dz <= 1e-9 && dy <= 1e-9 && theta.sin() > 0.0;
            assert_eq!(engaged, oracle, "theta = {theta}");
            assert_eq!(engaged, theta > 0.0 && theta <= PI / 2.0 + 1e-12, "theta = {theta}");
        }
    }

    proptest! {
        #[test]
        fn revolution_mean_grows_with_feed(v in 1.0f64..40.0, dv in 0.1f64..20.0) {
            let tool = ToolModel::new(4, 1.0, [200.0, 80.0, 10.0], [2.0, 1.0, 0.2], 20.0).unwrap();
            let planar = |v: f64| {
                let m = mean_force_full_engagement(&tool, &spindle(v, 0.0)).unwrap();
                m[0].hypot(m[1])
            };
            prop_assert!(planar(v + dv) > planar(v));
        }
    }
}
