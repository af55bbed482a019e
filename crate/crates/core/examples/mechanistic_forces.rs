//! Flute forces over one revolution for a partially immersed tool.
//!
//! cargo run --example mechanistic_forces

use std::f64::consts::PI;

use cut_transfer::mechanistic::{
    chip_thickness, engagement_from_geometry, mean_force_full_engagement, tool_to_base, total_force, MaterialRegion,
    SpindleState, ToolConfig,
};

/// Half-space below `z = depth - radius` relative to the tool centre.
struct Slab {
    top: f64,
}

impl MaterialRegion for Slab {
    fn contains(&self, _y: f64, z: f64) -> bool {
        z <= self.top
    }
}

fn main() -> cut_transfer::Result<()> {
    let config = ToolConfig::default();
    let tool = config.tool()?;
    let depth = 2.0;
    let slab = Slab {
        top: -tool.radius_mm + depth,
    };
    let mut spindle = SpindleState {
        speed_rps: config.spindle_rps,
        feed_mm_s: 12.5,
        angle_rad: 0.0,
    };
    println!(
        "chip thickness at 90 degrees: {:.4} mm",
        chip_thickness(PI / 2.0, &spindle, tool.n_flutes)?
    );
    let steps = 48;
    let period = 1.0 / config.spindle_rps;
    println!("{:>8} {:>8} {:>10} {:>10} {:>10}", "angle", "engaged", "F_x", "F_y", "F_z");
    for _ in 0..steps {
        let engagement = engagement_from_geometry((0.0, 0.0), &slab, &tool, &spindle);
        let f = tool_to_base(total_force(&tool, &spindle, &engagement)?);
        println!(
            "{:>8.1} {:>8} {:>10.3} {:>10.3} {:>10.3}",
            spindle.angle_rad.to_degrees() % 360.0,
            engagement.count(),
            f[0],
            f[1],
            f[2]
        );
        spindle.advance(period / steps as f64);
    }
    let mean = tool_to_base(mean_force_full_engagement(&tool, &spindle)?);
    println!("full-immersion revolution average: {mean:.3?}");
    Ok(())
}
