use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Action, EnvConfig, Material, Observation, StepRecord};
use crate::error::{Error, Result};
use crate::gp::{GpModel, PosteriorSampler};
use crate::mechanistic::{engagement_from_geometry, tool_to_base, total_force, SpindleState, ToolModel};
use crate::Vec3;

/// Advance `x'' = K_p (x_sp - x) - 2√K_p x' + a` exactly over `h` seconds
/// with constant setpoint and forcing.
pub fn critically_damped_step(x: f64, v: f64, setpoint: f64, accel: f64, kp: f64, h: f64) -> (f64, f64) {
    let w = kp.sqrt();
    let eq = setpoint + accel / kp;
    let u0 = x - eq;
    let c = v + w * u0;
    let e = (-w * h).exp();
    (eq + (u0 + c * h) * e, (v - w * h * c) * e)
}

/// Per-episode additive force disturbance on the policy-step grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Disturbance {
    values: Vec<Vec3>,
}

impl Disturbance {
    pub fn zero(len: usize) -> Self {
        Self {
            values: vec![[0.0; 3]; len],
        }
    }

    /// One joint GP draw plus i.i.d. Gaussian noise of `sigma` (N).
    pub fn draw(sampler: &PosteriorSampler, sigma: f64, seed: u64) -> Result<Self> {
        let mut values = sampler.draw(&mut crate::seed::rng(seed, "gp-draw", 0));
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rng = crate::seed::rng(seed, "sensor-noise", 0);
            for v in &mut values {
                for c in v.iter_mut() {
                    *c += noise.sample(&mut rng);
                }
            }
        }
        Ok(Self { values })
    }

    pub fn from_values(values: Vec<Vec3>) -> Self {
        Self { values }
    }

    /// Value at policy step `k`; the last value holds past the end.
    pub fn at(&self, k: usize) -> Vec3 {
        match self.values.len() {
            0 => [0.0; 3],
            n => self.values[k.min(n - 1)],
        }
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }
}

#[derive(Clone, Debug)]
struct Augmentation {
    sampler: Arc<PosteriorSampler>,
    sensor_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub record: StepRecord,
}

/// Planar cutting environment. Call [`CutEnv::reset`] before stepping.
#[derive(Clone, Debug)]
pub struct CutEnv {
    config: EnvConfig,
    base_tool: ToolModel,
    augmentation: Option<Augmentation>,
    tangent: Vec3,
    length: f64,
    // episode state
    tool: ToolModel,
    material: Material,
    spindle: SpindleState,
    disturbance: Option<Disturbance>,
    position: Vec3,
    velocity: Vec3,
    kp: Vec3,
    t_delta: f64,
    n_delta: f64,
    progress: f64,
    step: usize,
    force: Vec3,
    done: bool,
    started: bool,
}

impl CutEnv {
    /// Unaugmented environment; any augmentation section in `config` is ignored.
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let base_tool = config.tool.tool()?;
        let length = config.path_length();
        let tangent = std::array::from_fn(|i| (config.path.end[i] - config.path.start[i]) / length);
        let material = Material::new(&config.material);
        Ok(Self {
            tool: base_tool.clone(),
            base_tool,
            augmentation: None,
            tangent,
            length,
            material,
            spindle: SpindleState {
                speed_rps: config.tool.spindle_rps,
                feed_mm_s: 0.0,
                angle_rad: 0.0,
            },
            disturbance: None,
            position: config.path.start,
            velocity: [0.0; 3],
            kp: config.initial.kp,
            t_delta: config.initial.t_delta,
            n_delta: config.initial.n_delta,
            progress: 0.0,
            step: 0,
            force: [0.0; 3],
            done: false,
            started: false,
            config,
        })
    }

    /// Environment whose measured force carries GP draws and sensor noise.
    pub fn augmented(config: EnvConfig, gp: &GpModel) -> Result<Self> {
        let sampler = Arc::new(gp.sampler(&config.episode_times())?);
        Self::with_sampler(config, sampler)
    }

    /// Like [`CutEnv::augmented`] with an already factorized posterior on
    /// [`EnvConfig::episode_times`].
    pub fn with_sampler(config: EnvConfig, sampler: Arc<PosteriorSampler>) -> Result<Self> {
        let sensor_sigma = config.augmentation.as_ref().map_or(0.0, |a| a.sensor_sigma);
        if sampler.times().len() != config.horizon_steps() + 1 {
            return Err(Error::DimensionMismatch {
                expected: config.horizon_steps() + 1,
                found: sampler.times().len(),
            });
        }
        let mut env = Self::new(config)?;
        env.augmentation = Some(Augmentation { sampler, sensor_sigma });
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_augmented(&self) -> bool {
        self.augmentation.is_some()
    }

    pub fn sampler(&self) -> Option<&Arc<PosteriorSampler>> {
        self.augmentation.as_ref().map(|a| &a.sampler)
    }

    pub fn tool(&self) -> &ToolModel {
        &self.tool
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The tool has reached the end of the path.
    pub fn path_complete(&self) -> bool {
        self.along_path() >= self.length - self.config.end_tolerance_mm
    }

    pub fn mrv(&self) -> f64 {
        self.material.removed_volume()
    }

    /// Disturbance of the current episode, if augmented.
    pub fn disturbance(&self) -> Option<&Disturbance> {
        self.disturbance.as_ref()
    }

    /// Start a new episode: restore material, put the tool at the path start
    /// and draw this episode's constants (and disturbance) from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = crate::seed::rng(seed, "episode", 0);
        let c = &self.config.constants;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| {
            if r[1] > r[0] {
                rng.random_range(r[0]..=r[1])
            } else {
                r[0]
            }
        };
        let kc = draw(&mut rng, c.k_c_scale);
        let ke = draw(&mut rng, c.k_e_scale);
        self.tool = self.base_tool.with_scaled_constants(kc, ke);
        self.material = Material::new(&self.config.material);
        self.spindle = SpindleState {
            speed_rps: self.config.tool.spindle_rps,
            feed_mm_s: 0.0,
            angle_rad: rng.random_range(0.0..std::f64::consts::TAU),
        };
        self.disturbance = match &self.augmentation {
            Some(a) => Some(Disturbance::draw(&a.sampler, a.sensor_sigma, seed)?),
            None => None,
        };
        let init = &self.config.initial;
        self.kp = init.kp;
        self.t_delta = init.t_delta;
        self.n_delta = init.n_delta;
        self.progress = 0.0;
        self.step = 0;
        self.velocity = [0.0; 3];
        self.position = self.setpoint();
        self.force = [0.0; 3];
        self.done = false;
        self.started = true;
        Ok(self.observation())
    }

    fn setpoint(&self) -> Vec3 {
        let p = &self.config.path;
        std::array::from_fn(|i| {
            p.start[i] + self.progress * self.tangent[i] - if i == 2 { self.n_delta } else { 0.0 }
        })
    }

    fn along_path(&self) -> f64 {
        (0..3)
            .map(|i| (self.position[i] - self.config.path.start[i]) * self.tangent[i])
            .sum()
    }

    pub fn path_error(&self) -> Vec3 {
        let s = self.along_path();
        std::array::from_fn(|i| self.position[i] - self.config.path.start[i] - s * self.tangent[i])
    }

    pub fn commanded_speed(&self) -> f64 {
        self.config.path.speed_nominal * (1.0 + self.t_delta)
    }

    fn measured_force(&self) -> Vec3 {
        let d = self.disturbance.as_ref().map_or([0.0; 3], |d| d.at(self.step));
        std::array::from_fn(|i| self.force[i] + d[i])
    }

    /// Observation of the current state.
    pub fn observation(&self) -> Observation {
        let v = self.commanded_speed();
        Observation {
            path_alignment: (0..3).map(|i| v * self.tangent[i] * self.velocity[i]).sum(),
            path_error: self.path_error(),
            velocity: self.velocity,
            force: self.measured_force(),
            t_delta: self.t_delta,
            n_delta: self.n_delta,
            kp: self.kp,
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if !self.started {
            return Err(Error::invalid("step called before reset"));
        }
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let cfg = &self.config;
        let b = &cfg.bounds;
        let dt = cfg.dt;
        let a = action.clamped(b);
        for i in 0..3 {
            self.kp[i] = (self.kp[i] + a.kp_rates[i] * dt).clamp(b.kp_min, b.kp_max);
        }
        self.t_delta = (self.t_delta + a.feed_rate * dt).clamp(b.feed_adj[0], b.feed_adj[1]);
        self.n_delta = (self.n_delta + a.doc_rate * dt).clamp(b.doc[0], b.doc[1]);

        let h = dt / cfg.substeps as f64;
        let accel_per_newton = 1000.0 / cfg.effective_mass_kg;
        let speed = self.commanded_speed();
        let mrv_before = self.material.removed_volume();
        let mut force_sum = [0.0; 3];
        for _ in 0..cfg.substeps {
            let feed = (0..3).map(|i| self.velocity[i] * self.tangent[i]).sum::<f64>().max(0.0);
            self.spindle.feed_mm_s = feed;
            let engagement = engagement_from_geometry(
                (self.position[1], self.position[2]),
                &self.material,
                &self.tool,
                &self.spindle,
            );
            let f = tool_to_base(total_force(&self.tool, &self.spindle, &engagement)?);
            self.progress = (self.progress + speed * h).min(self.length);
            let sp = self.setpoint();
            for i in 0..3 {
                let (x, v) =
                    critically_damped_step(self.position[i], self.velocity[i], sp[i], accel_per_newton * f[i], self.kp[i], h);
                self.position[i] = x;
                self.velocity[i] = v;
                force_sum[i] += f[i];
            }
            self.spindle.advance(h);
            self.material
                .remove_disc(self.position[1], self.position[2], self.tool.radius_mm);
        }
        if self.position.iter().chain(&self.velocity).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tool state"));
        }
        self.force = force_sum.map(|f| f / cfg.substeps as f64);
        self.step += 1;
        let delta_mrv = self.material.removed_volume() - mrv_before;

        let obs = self.observation();
        let w = &self.config.weights;
        let terms = [
            w.q_mrv * delta_mrv,
            -w.q_cut * dt,
            -(0..3).map(|i| w.q_d[i] * obs.path_error[i].powi(2)).sum::<f64>() * dt,
            -(0..3).map(|i| w.q_f[i] * obs.force[i].powi(2)).sum::<f64>() * dt,
        ];
        let reward = terms.iter().sum();
        self.done = self.path_complete() || self.step >= self.config.horizon_steps();
        let record = StepRecord {
            t: self.time(),
            position: self.position,
            path_error: obs.path_error,
            velocity: obs.velocity,
            force: obs.force,
            force_mechanistic: self.force,
            t_delta: self.t_delta,
            n_delta: self.n_delta,
            kp: self.kp,
            action: a,
            reward,
            reward_terms: terms,
            delta_mrv,
            mrv: self.material.removed_volume(),
        };
        Ok(StepOutcome {
            observation: obs,
            reward,
            done: self.done,
            record,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{AxisHyper, GpMeta, PeriodicKernel, ResidualTargets};
    use crate::sim::{recompute_reward, rollout, AugmentationConfig};
    use proptest::prelude::*;

    fn hold() -> impl Fn(&Observation) -> Action {
        |_: &Observation| Action::default()
    }

    fn config_with_doc(doc: f64) -> EnvConfig {
        let mut c = EnvConfig::default();
        c.initial.n_delta = doc;
        c
    }

    #[test]
    fn same_seed_same_episode() {
        let mut env = CutEnv::new(config_with_doc(1.0)).unwrap();
        let a = rollout(&mut env, &hold(), 7, Some(200)).unwrap();
        let b = rollout(&mut env, &hold(), 7, Some(200)).unwrap();
        assert_eq!(a, b);
        let c = rollout(&mut env, &hold(), 8, Some(200)).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn initial_force_is_zero_without_augmentation() {
        let mut env = CutEnv::new(EnvConfig::default()).unwrap();
        let obs = env.reset(3).unwrap();
        assert_eq!(obs.force, [0.0; 3]);
        assert_eq!(obs.path_error, [0.0; 3]);
        assert_eq!(obs.kp, EnvConfig::default().initial.kp);
        assert!(env.disturbance().is_none());
    }

    #[test]
    fn collapsed_constant_ranges_repeat_material() {
        let mut c = EnvConfig::default();
        c.constants.k_c_scale = [1.1, 1.1];
        c.constants.k_e_scale = [0.9, 0.9];
        let mut env = CutEnv::new(c).unwrap();
        env.reset(1).unwrap();
        let first = env.tool().clone();
        env.reset(2).unwrap();
        assert_eq!(env.tool(), &first);
    }

    #[test]
    fn step_requires_active_episode() {
        let mut env = CutEnv::new(EnvConfig::default()).unwrap();
        assert!(env.step(&Action::default()).is_err());
        env.reset(0).unwrap();
        let mut out = env.step(&Action::default()).unwrap();
        while !out.done {
            out = env.step(&Action::default()).unwrap();
        }
        assert!(matches!(env.step(&Action::default()), Err(Error::EpisodeDone)));
    }

    #[test]
    fn no_material_means_no_force() {
        let mut c = config_with_doc(1.0);
        c.material.extent_mm = [0.0, 0.0];
        let w = c.weights.clone();
        let mut env = CutEnv::new(c).unwrap();
        let traj = rollout(&mut env, &hold(), 5, None).unwrap();
        assert!(traj.records.iter().all(|r| r.force == [0.0; 3] && r.delta_mrv == 0.0));
        let path: f64 = traj
            .records
            .iter()
            .map(|r| (0..3).map(|i| w.q_d[i] * r.path_error[i].powi(2)).sum::<f64>() * traj.dt)
            .sum();
        let expected = -w.q_cut * traj.duration() - path;
        assert!((traj.total_reward() - expected).abs() < 1e-9);
    }

    #[test]
    fn constant_depth_cut_removes_the_swept_area() {
        let doc = 1.5;
        let mut c = config_with_doc(doc);
        c.effective_mass_kg = 1e9;
        let (len, thick) = (c.material.extent_mm[1] - c.material.extent_mm[0], c.material.thickness_mm);
        let mut env = CutEnv::new(c).unwrap();
        let traj = rollout(&mut env, &hold(), 11, None).unwrap();
        assert!(traj.completed);
        let exact = doc * len * thick;
        assert!((traj.mrv() - exact).abs() / exact < 0.01, "{} vs {exact}", traj.mrv());
        for w in traj.records.windows(2) {
            assert!(w[1].mrv >= w[0].mrv);
        }
    }

    #[test]
    fn rewards_add_up() {
        let mut env = CutEnv::new(config_with_doc(1.2)).unwrap();
        let policy = |o: &Observation| Action {
            kp_rates: [0.0, 0.0, -300.0],
            feed_rate: if o.t_delta < 0.5 { 1.0 } else { 0.0 },
            doc_rate: 0.3,
        };
        let traj = rollout(&mut env, &policy, 2, None).unwrap();
        let sum: f64 = traj.records.iter().map(|r| r.reward).sum();
        assert!((traj.total_reward() - sum).abs() < 1e-9);
        let rebuilt = recompute_reward(&traj.records, &env.config().weights, env.config().dt);
        assert!((rebuilt - traj.total_reward()).abs() < 1e-9);
        let terms: f64 = traj.reward_terms().iter().sum();
        assert!((terms - sum).abs() < 1e-9);
    }

    #[test]
    fn null_policy_holds_parameters() {
        let c = config_with_doc(0.7);
        let init = c.initial.clone();
        let mut env = CutEnv::new(c).unwrap();
        let traj = rollout(&mut env, &hold(), 4, None).unwrap();
        for r in &traj.records {
            assert_eq!((r.kp, r.t_delta, r.n_delta), (init.kp, init.t_delta, init.n_delta));
        }
        assert!(rollout(&mut env, &hold(), 4, Some(0)).unwrap().is_empty());
    }

    #[test]
    fn reward_grows_with_mrv_without_tracking_terms() {
        let reward_at = |doc: f64| {
            let mut c = config_with_doc(doc);
            c.weights.q_d = [0.0; 3];
            c.weights.q_f = [0.0; 3];
            let mut env = CutEnv::new(c).unwrap();
            let t = rollout(&mut env, &hold(), 9, Some(300)).unwrap();
            assert_eq!(t.len(), 300);
            (t.mrv(), t.total_reward())
        };
        let (m1, r1) = reward_at(0.5);
        let (m2, r2) = reward_at(1.5);
        assert!(m2 > m1 && r2 > r1);
    }

    fn flat_gp(signal: f64, noise: f64) -> GpModel {
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let res = times.iter().map(|t| [(9.0 * t).sin() * signal.sqrt(), 0.0, 0.0]).collect();
        let h = AxisHyper {
            kernel: PeriodicKernel::new(0.2, 1.0, signal).unwrap(),
            noise_variance: noise,
        };
        GpModel::new([h; 3], ResidualTargets::new(times, res).unwrap(), GpMeta::default()).unwrap()
    }

    #[test]
    fn vanishing_augmentation_matches_clean_run() {
        let mut c = config_with_doc(1.0);
        c.horizon = 4.0;
        c.augmentation = Some(AugmentationConfig {
            gp_model_path: None,
            sensor_sigma: 0.0,
        });
        let mut clean = CutEnv::new(c.clone()).unwrap();
        let mut aug = CutEnv::augmented(c, &flat_gp(1e-24, 1e-3)).unwrap();
        let a = rollout(&mut clean, &hold(), 6, None).unwrap();
        let b = rollout(&mut aug, &hold(), 6, None).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            for i in 0..3 {
                assert!((x.force[i] - y.force[i]).abs() < 1e-9);
                assert_eq!(x.position[i], y.position[i]);
            }
            assert!((x.reward - y.reward).abs() < 1e-9);
        }
    }

    #[test]
    fn augmentation_shifts_measured_force_by_the_draw() {
        let mut c = config_with_doc(1.0);
        c.horizon = 2.0;
        c.augmentation = Some(AugmentationConfig {
            gp_model_path: None,
            sensor_sigma: 0.5,
        });
        let mut env = CutEnv::augmented(c, &flat_gp(4.0, 0.1)).unwrap();
        let traj = rollout(&mut env, &hold(), 3, None).unwrap();
        let d = env.disturbance().unwrap().clone();
        assert_eq!(traj.observations[0].force, d.at(0));
        for (k, r) in traj.records.iter().enumerate() {
            for i in 0..3 {
                assert!((r.force[i] - r.force_mechanistic[i] - d.at(k + 1)[i]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn tracking_never_overshoots(kp in 100.0f64..4000.0, step in -5.0f64..5.0) {
            let (mut x, mut v) = (0.0, 0.0);
            let h = 1e-3;
            for _ in 0..3000 {
                (x, v) = critically_damped_step(x, v, step, 0.0, kp, h);
                prop_assert!(x * step.signum() <= step.abs() * 1.001 + 1e-12);
            }
            prop_assert!((x - step).abs() < 1e-3 * (1.0 + step.abs()));
        }

        #[test]
        fn exact_step_composes(kp in 100.0f64..4000.0, x0 in -1.0f64..1.0, v0 in -50.0f64..50.0, a in -500.0f64..500.0) {
            let (x1, v1) = critically_damped_step(x0, v0, 0.3, a, kp, 0.002);
            let (xh, vh) = critically_damped_step(x0, v0, 0.3, a, kp, 0.001);
            let (x2, v2) = critically_damped_step(xh, vh, 0.3, a, kp, 0.001);
            prop_assert!((x1 - x2).abs() < 1e-9 && (v1 - v2).abs() < 1e-6);
        }
    }
}
