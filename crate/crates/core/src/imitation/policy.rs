use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::sim::{Action, ActionBounds, Controller, Observation, ACTION_DIM, OBS_DIM};
use crate::Vec3;

/// Two-phase gain/feed/depth schedule standing in for a trained expert.
///
/// Below the contact force the tool approaches stiffly at nominal feed
/// while the depth of cut ramps toward its target. Above it the feed rises,
/// the normal gain drops and the depth is held. Rates are proportional to
/// the gap between target and current value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    /// N.
    pub contact_force: f64,
    pub approach_kp: Vec3,
    pub cutting_kp: Vec3,
    pub approach_feed: f64,
    pub cutting_feed: f64,
    /// Feed target reduction per newton above `force_ref`.
    pub feed_force_gain: f64,
    pub force_ref: f64,
    /// mm.
    pub doc_target: f64,
    /// Proportional gains (1/s) for gains, feed and depth.
    pub kp_gain: f64,
    pub feed_gain: f64,
    pub doc_gain: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            contact_force: 1.0,
            approach_kp: [3000.0; 3],
            cutting_kp: [3000.0, 3000.0, 600.0],
            approach_feed: 0.0,
            cutting_feed: 0.8,
            feed_force_gain: 0.1,
            force_ref: 4.0,
            doc_target: 1.5,
            kp_gain: 20.0,
            feed_gain: 10.0,
            doc_gain: 5.0,
        }
    }
}

impl ExpertConfig {
    pub fn in_contact(&self, obs: &Observation) -> bool {
        obs.force_norm() > self.contact_force
    }

    fn act(&self, obs: &Observation) -> [f64; ACTION_DIM] {
        let contact = self.in_contact(obs);
        let (kp, feed) = if contact {
            let excess = (obs.force_norm() - self.force_ref).max(0.0);
            (self.cutting_kp, self.cutting_feed - self.feed_force_gain * excess)
        } else {
            (self.approach_kp, self.approach_feed)
        };
        let doc_rate = if contact {
            0.0
        } else {
            self.doc_gain * (self.doc_target - obs.n_delta)
        };
        [
            self.kp_gain * (kp[0] - obs.kp[0]),
            self.kp_gain * (kp[1] - obs.kp[1]),
            self.kp_gain * (kp[2] - obs.kp[2]),
            self.feed_gain * (feed - obs.t_delta),
            doc_rate,
        ]
    }
}

/// `a = W o + b`, `W` row-major `ACTION_DIM × OBS_DIM`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearPolicy {
    fn act(&self, obs: &Observation) -> [f64; ACTION_DIM] {
        let o = obs.to_array();
        std::array::from_fn(|r| {
            self.bias[r]
                + self.weights[r * OBS_DIM..(r + 1) * OBS_DIM]
                    .iter()
                    .zip(&o)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
        })
    }

    /// A smooth regulator driving gains, feed and depth toward fixed
    /// targets, with the normal gain also responding to normal force.
    pub fn regulator() -> Self {
        let mut w = vec![0.0; ACTION_DIM * OBS_DIM];
        let mut b = vec![0.0; ACTION_DIM];
        let kp_target = [2500.0, 2500.0, 1500.0];
        for i in 0..3 {
            w[i * OBS_DIM + 12 + i] = -2.0;
            b[i] = 2.0 * kp_target[i];
        }
        w[2 * OBS_DIM + 9] = -40.0;
        w[3 * OBS_DIM + 10] = -1.0;
        b[3] = 0.5;
        w[4 * OBS_DIM + 11] = -1.0;
        b[4] = 1.2;
        Self { weights: w, bias: b }
    }
}

/// Learned network mapping observations to actions in units of the rate
/// limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedPolicy {
    pub network: Mlp,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: String,
    pub config_hash: String,
    pub seed: u64,
    /// β used in each collection episode.
    #[serde(default)]
    pub betas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    ScriptedExpert(ExpertConfig),
    Linear(LinearPolicy),
    Constant { action: [f64; ACTION_DIM] },
    Learned(LearnedPolicy),
}

/// A policy with its action limits. Evaluation is a pure function of the
/// observation and the output is clamped to the limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    /// Symmetric per-component action limits.
    pub limits: [f64; ACTION_DIM],
}

impl Policy {
    pub fn scripted_expert(config: ExpertConfig, bounds: &ActionBounds) -> Self {
        Self {
            kind: PolicyKind::ScriptedExpert(config),
            limits: bounds.rate_limits(),
        }
    }

    pub fn linear(linear: LinearPolicy, bounds: &ActionBounds) -> Result<Self> {
        if linear.weights.len() != ACTION_DIM * OBS_DIM || linear.bias.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch {
                expected: ACTION_DIM * OBS_DIM,
                found: linear.weights.len(),
            });
        }
        Ok(Self {
            kind: PolicyKind::Linear(linear),
            limits: bounds.rate_limits(),
        })
    }

    pub fn constant(action: Action, bounds: &ActionBounds) -> Self {
        Self {
            kind: PolicyKind::Constant {
                action: action.to_array(),
            },
            limits: bounds.rate_limits(),
        }
    }

    pub fn learned(network: Mlp, provenance: Provenance, bounds: &ActionBounds) -> Result<Self> {
        network.validate()?;
        if network.input_dim() != OBS_DIM || network.output_dim() != ACTION_DIM {
            return Err(Error::DimensionMismatch {
                expected: OBS_DIM,
                found: network.input_dim(),
            });
        }
        Ok(Self {
            kind: PolicyKind::Learned(LearnedPolicy { network, provenance }),
            limits: bounds.rate_limits(),
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PolicyKind::ScriptedExpert(_) => "expert",
            PolicyKind::Linear(_) => "linear",
            PolicyKind::Constant { .. } => "constant",
            PolicyKind::Learned(_) => "learned",
        }
    }

    pub fn network(&self) -> Option<&Mlp> {
        match &self.kind {
            PolicyKind::Learned(l) => Some(&l.network),
            _ => None,
        }
    }

    /// Action in units of the limits, before clamping.
    pub fn raw_normalized(&self, obs: &Observation) -> [f64; ACTION_DIM] {
        let physical = match &self.kind {
            PolicyKind::ScriptedExpert(e) => e.act(obs),
            PolicyKind::Linear(l) => l.act(obs),
            PolicyKind::Constant { action } => *action,
            PolicyKind::Learned(l) => {
                let out = l.network.forward(&obs.to_array());
                return std::array::from_fn(|i| out[i]);
            }
        };
        std::array::from_fn(|i| physical[i] / self.limits[i])
    }

    /// Clamped action in units of the limits.
    pub fn normalized(&self, obs: &Observation) -> [f64; ACTION_DIM] {
        self.raw_normalized(obs).map(|v| v.clamp(-1.0, 1.0))
    }

    pub fn evaluate(&self, obs: &Observation) -> Action {
        let n = self.normalized(obs);
        Action::from_array(&std::array::from_fn(|i| n[i] * self.limits[i]))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if let PolicyKind::Learned(l) = &p.kind {
            l.network.validate()?;
        }
        if p.limits.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid(format!("{}: action limits must be positive", path.display())));
        }
        Ok(p)
    }
}

impl Controller for Policy {
    fn act(&self, obs: &Observation) -> Action {
        self.evaluate(obs)
    }
}
