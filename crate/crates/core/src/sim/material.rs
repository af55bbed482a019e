use crate::mechanistic::MaterialRegion;

use super::MaterialConfig;

/// Heightmap of the slab cross-section: one continuous top height per
/// `grid`-wide column along `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    y_min: f64,
    grid: f64,
    bottom: f64,
    surface: f64,
    thickness: f64,
    heights: Vec<f64>,
    removed_area: f64,
}

impl Material {
    pub fn new(config: &MaterialConfig) -> Self {
        let width = config.extent_mm[1] - config.extent_mm[0];
        let columns = (width / config.grid_mm).round().max(0.0) as usize;
        Self {
            y_min: config.extent_mm[0],
            grid: config.grid_mm,
            bottom: config.surface_z_mm - config.depth_mm,
            surface: config.surface_z_mm,
            thickness: config.thickness_mm,
            heights: vec![config.surface_z_mm; columns],
            removed_area: 0.0,
        }
    }

    pub fn columns(&self) -> usize {
        self.heights.len()
    }

    pub fn column_centre(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.grid
    }

    pub fn height(&self, j: usize) -> f64 {
        self.heights[j]
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Top surface at `y`, interpolated between column centres.
    pub fn surface_at(&self, y: f64) -> Option<f64> {
        let n = self.heights.len();
        if n == 0 || y < self.y_min || y > self.y_min + n as f64 * self.grid {
            return None;
        }
        let u = (y - self.y_min) / self.grid - 0.5;
        if u <= 0.0 {
            return Some(self.heights[0]);
        }
        let j = u.floor() as usize;
        if j + 1 >= n {
            return Some(self.heights[n - 1]);
        }
        let w = u - j as f64;
        Some(self.heights[j] * (1.0 - w) + self.heights[j + 1] * w)
    }

    /// Clear everything inside the disc and above its lower arc; returns the
    /// removed volume (mm³).
    pub fn remove_disc(&mut self, cy: f64, cz: f64, radius: f64) -> f64 {
        if self.heights.is_empty() || cz - radius >= self.surface {
            return 0.0;
        }
        let lo = ((cy - radius - self.y_min) / self.grid - 0.5).ceil().max(0.0) as usize;
        let hi = ((cy + radius - self.y_min) / self.grid - 0.5).floor();
        if hi < 0.0 {
            return 0.0;
        }
        let hi = (hi as usize).min(self.heights.len() - 1);
        let mut area = 0.0;
        for j in lo..=hi {
            let dy = self.column_centre(j) - cy;
            let r2 = radius * radius - dy * dy;
            if r2 <= 0.0 {
                continue;
            }
            let z_low = (cz - r2.sqrt()).max(self.bottom);
            if z_low < self.heights[j] {
                area += (self.heights[j] - z_low) * self.grid;
                self.heights[j] = z_low;
            }
        }
        self.removed_area += area;
        area * self.thickness
    }

    /// Total removed volume (mm³).
    pub fn removed_volume(&self) -> f64 {
        self.removed_area * self.thickness
    }
}

impl MaterialRegion for Material {
    fn contains(&self, y: f64, z: f64) -> bool {
        match self.surface_at(y) {
            Some(top) => z >= self.bottom && z <= top,
            None => false,
        }
    }
}
