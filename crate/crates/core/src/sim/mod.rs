//! Planar cutting environment.
//!
//! A kinematic tool point tracks a setpoint that moves along a straight
//! reference path at the commanded feed, offset into the material by the
//! depth-of-cut adjustment. Flute forces come from the mechanistic model and
//! material is removed from a column heightmap as the tool disc sweeps
//! through it. In augmented mode the measured force additionally carries a
//! pre-sampled GP disturbance and sensor noise.

mod config;
mod env;
mod material;
mod trajectory;

pub use config::{
    ActionBounds, AugmentationConfig, ConstantRanges, EnvConfig, InitialState, MaterialConfig, PathConfig,
    RewardWeights,
};
pub use env::{critically_damped_step, CutEnv, Disturbance, StepOutcome};
pub use material::Material;
pub use trajectory::{recompute_reward, rollout, StepRecord, Trajectory};

use serde::{Deserialize, Serialize};

use crate::Vec3;

pub const OBS_DIM: usize = 15;
pub const ACTION_DIM: usize = 5;

/// Index map of [`Observation::to_array`].
pub const OBS_NAMES: [&str; OBS_DIM] = [
    "path_alignment",
    "e_x",
    "e_y",
    "e_z",
    "v_x",
    "v_y",
    "v_z",
    "f_x",
    "f_y",
    "f_z",
    "t_delta",
    "n_delta",
    "kp_x",
    "kp_y",
    "kp_z",
];

pub const ACTION_NAMES: [&str; ACTION_DIM] = ["kp_rate_x", "kp_rate_y", "kp_rate_z", "feed_rate", "doc_rate"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Commanded path velocity dotted with the tool velocity (mm²/s²).
    pub path_alignment: f64,
    /// Perpendicular deviation from the reference path (mm).
    pub path_error: Vec3,
    /// mm/s.
    pub velocity: Vec3,
    /// Measured force (N).
    pub force: Vec3,
    pub t_delta: f64,
    /// mm.
    pub n_delta: f64,
    /// Diagonal position gains (1/s²).
    pub kp: Vec3,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut a = [0.0; OBS_DIM];
        a[0] = self.path_alignment;
        a[1..4].copy_from_slice(&self.path_error);
        a[4..7].copy_from_slice(&self.velocity);
        a[7..10].copy_from_slice(&self.force);
        a[10] = self.t_delta;
        a[11] = self.n_delta;
        a[12..15].copy_from_slice(&self.kp);
        a
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Self {
            path_alignment: a[0],
            path_error: [a[1], a[2], a[3]],
            velocity: [a[4], a[5], a[6]],
            force: [a[7], a[8], a[9]],
            t_delta: a[10],
            n_delta: a[11],
            kp: [a[12], a[13], a[14]],
        }
    }

    pub fn force_norm(&self) -> f64 {
        self.force.iter().map(|f| f * f).sum::<f64>().sqrt()
    }
}

/// Shift the measured force by `draw`, leaving every other field alone.
pub fn augment_observation(obs: &Observation, draw: Vec3) -> Observation {
    Observation {
        force: std::array::from_fn(|i| obs.force[i] + draw[i]),
        ..*obs
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// d/dt of the gain diagonal (1/s³).
    pub kp_rates: Vec3,
    /// d/dt of `t_Δ` (1/s).
    pub feed_rate: f64,
    /// d/dt of `n_Δ` (mm/s).
    pub doc_rate: f64,
}

impl Action {
    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        [
            self.kp_rates[0],
            self.kp_rates[1],
            self.kp_rates[2],
            self.feed_rate,
            self.doc_rate,
        ]
    }

    pub fn from_array(a: &[f64; ACTION_DIM]) -> Self {
        Self {
            kp_rates: [a[0], a[1], a[2]],
            feed_rate: a[3],
            doc_rate: a[4],
        }
    }

    /// Componentwise clamp to `±limits`.
    pub fn clamped(&self, bounds: &ActionBounds) -> Self {
        let lim = bounds.rate_limits();
        let a = self.to_array();
        Self::from_array(&std::array::from_fn(|i| a[i].clamp(-lim[i], lim[i])))
    }
}

/// Anything that maps observations to actions.
pub trait Controller {
    fn act(&self, obs: &Observation) -> Action;
}

impl<F: Fn(&Observation) -> Action> Controller for F {
    fn act(&self, obs: &Observation) -> Action {
        self(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_obs() -> impl Strategy<Value = Observation> {
        prop::array::uniform15(-100.0f64..100.0).prop_map(|a| Observation::from_array(&a))
    }

    #[test]
    fn layout_is_stable() {
        let obs = Observation {
            path_alignment: 1.0,
            path_error: [2.0, 3.0, 4.0],
            velocity: [5.0, 6.0, 7.0],
            force: [8.0, 9.0, 10.0],
            t_delta: 11.0,
            n_delta: 12.0,
            kp: [13.0, 14.0, 15.0],
        };
        let a = obs.to_array();
        for (i, v) in a.iter().enumerate() {
            assert_eq!(*v, (i + 1) as f64, "{}", OBS_NAMES[i]);
        }
        assert_eq!(OBS_NAMES[8], "f_y");
    }

    #[test]
    fn augmentation_touches_force_only() {
        let obs = Observation::from_array(&std::array::from_fn(|i| i as f64));
        assert_eq!(augment_observation(&obs, [0.0; 3]), obs);
        let shifted = augment_observation(&obs, [0.0, 1.0, 0.0]);
        let (a, b) = (obs.to_array(), shifted.to_array());
        for i in 0..OBS_DIM {
            let expected = if i == 8 { a[i] + 1.0 } else { a[i] };
            assert_eq!(b[i], expected);
        }
    }

    proptest! {
        #[test]
        fn augmentation_round_trip(obs in arb_obs(), d in prop::array::uniform3(-10.0f64..10.0)) {
            let back = augment_observation(&augment_observation(&obs, d), d.map(|v| -v));
            for (x, y) in back.to_array().iter().zip(obs.to_array()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn observation_array_round_trip(obs in arb_obs()) {
            prop_assert_eq!(Observation::from_array(&obs.to_array()), obs);
        }

        #[test]
        fn clamped_actions_respect_bounds(a in prop::array::uniform5(-1e5f64..1e5)) {
            let b = ActionBounds::default();
            let c = Action::from_array(&a).clamped(&b).to_array();
            for (v, lim) in c.iter().zip(b.rate_limits()) {
                prop_assert!(v.abs() <= lim);
            }
        }
    }
}
