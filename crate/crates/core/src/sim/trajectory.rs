use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, Controller, CutEnv, Observation, RewardWeights};
use crate::error::{Error, Result};
use crate::Vec3;

/// State and reward after one policy step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Time at the end of the step (s).
    pub t: f64,
    pub position: Vec3,
    pub path_error: Vec3,
    pub velocity: Vec3,
    /// Measured force, including any disturbance (N).
    pub force: Vec3,
    /// Mechanistic force alone (N).
    pub force_mechanistic: Vec3,
    pub t_delta: f64,
    pub n_delta: f64,
    pub kp: Vec3,
    /// Action after clamping.
    pub action: Action,
    pub reward: f64,
    /// MRV, time, path and force terms.
    pub reward_terms: [f64; 4],
    pub delta_mrv: f64,
    /// Cumulative removed volume (mm³).
    pub mrv: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub dt: f64,
    /// Initial observation followed by one per step.
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub records: Vec<StepRecord>,
    /// True when the path end was reached before the time limit.
    pub completed: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn mrv(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.mrv)
    }

    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    pub fn reward_terms(&self) -> [f64; 4] {
        let mut t = [0.0; 4];
        for r in &self.records {
            for i in 0..4 {
                t[i] += r.reward_terms[i];
            }
        }
        t
    }

    /// Mean absolute per-step change of each action component.
    pub fn action_change(&self) -> [f64; 5] {
        let mut acc = [0.0; 5];
        if self.actions.len() < 2 {
            return acc;
        }
        for w in self.actions.windows(2) {
            let (a, b) = (w[0].to_array(), w[1].to_array());
            for i in 0..5 {
                acc[i] += (b[i] - a[i]).abs();
            }
        }
        acc.map(|v| v / (self.actions.len() - 1) as f64)
    }

    /// Per-step trace: `t, e_x, e_z, F_y, F_z, t_delta, n_delta, Kp_x, Kp_y,
    /// Kp_z, reward, e_y, F_x, mrv`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(TRACE_HEADER).map_err(csv_err)?;
        for r in &self.records {
            let row = [
                r.t,
                r.path_error[0],
                r.path_error[2],
                r.force[1],
                r.force[2],
                r.t_delta,
                r.n_delta,
                r.kp[0],
                r.kp[1],
                r.kp[2],
                r.reward,
                r.path_error[1],
                r.force[0],
                r.mrv,
            ];
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub const TRACE_HEADER: [&str; 14] = [
    "t", "e_x", "e_z", "F_y", "F_z", "t_delta", "n_delta", "Kp_x", "Kp_y", "Kp_z", "reward", "e_y", "F_x", "mrv",
];

/// Episodic reward rebuilt from logged path errors, forces and cumulative
/// MRV.
pub fn recompute_reward(records: &[StepRecord], weights: &RewardWeights, dt: f64) -> f64 {
    let mut prev_mrv = 0.0;
    let mut total = 0.0;
    for r in records {
        let terms = [
            weights.q_mrv * (r.mrv - prev_mrv),
            -weights.q_cut * dt,
            -(0..3).map(|i| weights.q_d[i] * r.path_error[i].powi(2)).sum::<f64>() * dt,
            -(0..3).map(|i| weights.q_f[i] * r.force[i].powi(2)).sum::<f64>() * dt,
        ];
        total += terms.iter().sum::<f64>();
        prev_mrv = r.mrv;
    }
    total
}

/// Reset `env` with `seed` and run `policy` until the episode ends or
/// `max_steps` steps have been taken.
pub fn rollout(env: &mut CutEnv, policy: &dyn Controller, seed: u64, max_steps: Option<usize>) -> Result<Trajectory> {
    let mut obs = env.reset(seed)?;
    let limit = max_steps.unwrap_or(usize::MAX);
    let mut traj = Trajectory {
        seed,
        dt: env.config().dt,
        observations: vec![obs],
        ..Default::default()
    };
    while traj.records.len() < limit && !env.is_done() {
        let action = policy.act(&obs);
        let out = env.step(&action)?;
        obs = out.observation;
        traj.observations.push(obs);
        traj.actions.push(out.record.action);
        traj.records.push(out.record);
        traj.completed = env.path_complete();
    }
    Ok(traj)
}
