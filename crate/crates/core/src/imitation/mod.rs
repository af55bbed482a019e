//! Imitation learning in the GP-augmented surrogate domain.
//!
//! Demonstrations pair GP-corrected observations `o_e + d'` with the
//! expert's action on the clean observation `o_e`. Behavioural cloning
//! collects expert-only episodes and trains once; DAgger mixes expert and
//! learner control with a decaying β and retrains after every episode.
//! Both start from a warm-started network cloned on clean expert rollouts.

mod mlp;
mod policy;

pub use mlp::{Layer, Mlp, Normalization, TrainConfig};
pub use policy::{ExpertConfig, LearnedPolicy, LinearPolicy, Policy, PolicyKind, Provenance};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpModel, PosteriorSampler};
use crate::sim::{
    augment_observation, rollout, ActionBounds, CutEnv, Disturbance, EnvConfig, Trajectory, ACTION_DIM, OBS_DIM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bc,
    Dagger,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bc" => Ok(Self::Bc),
            "dagger" => Ok(Self::Dagger),
            _ => Err(Error::invalid(format!("unknown algorithm {s:?} (expected bc or dagger)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmStartConfig {
    pub episodes_per_round: usize,
    pub max_rounds: usize,
    /// Relative reward gap to the expert at which cloning stops.
    pub tolerance: f64,
    pub eval_episodes: usize,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self {
            episodes_per_round: 5,
            max_rounds: 8,
            tolerance: 0.05,
            eval_episodes: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImitationConfig {
    pub algorithm: Algorithm,
    /// Data-collection episodes.
    pub episodes: usize,
    /// Episodes over which β falls from 1 to 0.
    pub beta_episodes: usize,
    pub lr: f64,
    pub batch: usize,
    /// Supervised epochs per DAgger or warm-start training round.
    pub epochs: usize,
    /// Epochs of the single behavioural-cloning round.
    pub bc_epochs: usize,
    pub hidden: Vec<usize>,
    /// `None` starts from a freshly initialized network.
    pub warm_start: Option<WarmStartConfig>,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dagger,
            episodes: 50,
            beta_episodes: 45,
            lr: 1e-3,
            batch: 64,
            epochs: 20,
            bc_epochs: 250,
            hidden: vec![64, 64],
            warm_start: Some(WarmStartConfig::default()),
        }
    }
}

impl ImitationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.batch == 0 || !(self.lr > 0.0) || self.hidden.contains(&0) {
            return Err(Error::Config(
                "episodes, batch, learning rate and hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
            seed,
        }
    }
}

/// DAgger mixing probability for episode `i`: `max(0, 1 - i / n)`.
pub fn beta(episode: usize, beta_episodes: usize) -> f64 {
    if beta_episodes == 0 {
        return 0.0;
    }
    (1.0 - episode as f64 / beta_episodes as f64).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeProvenance {
    pub seed: u64,
    pub beta: f64,
    pub steps: usize,
    pub expert_steps: usize,
}

/// Aggregated `(corrected observation, expert action)` pairs. Actions are
/// stored in units of the action limits.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemoBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub episodes: Vec<EpisodeProvenance>,
}

impl DemoBuffer {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn push(&mut self, obs: [f64; OBS_DIM], action: [f64; ACTION_DIM]) {
        self.observations.push(obs.to_vec());
        self.actions.push(action.to_vec());
    }

    pub fn extend(&mut self, other: DemoBuffer) {
        self.observations.extend(other.observations);
        self.actions.extend(other.actions);
        self.episodes.extend(other.episodes);
    }
}

/// Source of the per-episode correction `d'`: one GP posterior draw on the
/// episode grid plus sensor noise.
#[derive(Clone, Debug)]
pub struct GpCorrection {
    pub sampler: Arc<PosteriorSampler>,
    pub sensor_sigma: f64,
}

impl GpCorrection {
    pub fn new(gp: &GpModel, env: &EnvConfig, sensor_sigma: f64) -> Result<Self> {
        Ok(Self {
            sampler: Arc::new(gp.sampler(&env.episode_times())?),
            sensor_sigma,
        })
    }

    pub fn draw(&self, seed: u64) -> Result<Disturbance> {
        Disturbance::draw(&self.sampler, self.sensor_sigma, seed)
    }
}

/// Run one episode in the clean environment. Each step the expert acts with
/// probability β and the learner (on the corrected observation) otherwise;
/// the stored label is always the expert's action on the clean observation.
pub fn collect(
    env: &mut CutEnv,
    expert: &Policy,
    learner: Option<&Policy>,
    beta: f64,
    correction: Option<&GpCorrection>,
    seed: u64,
) -> Result<(DemoBuffer, Trajectory)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta {beta} outside [0, 1]")));
    }
    if env.is_augmented() {
        return Err(Error::invalid("demonstrations are collected in the clean environment"));
    }
    if beta < 1.0 && learner.is_none() {
        return Err(Error::invalid("a learner is required when beta < 1"));
    }
    let disturbance = match correction {
        Some(c) => c.draw(crate::seed::derive(seed, "correction", 0))?,
        None => Disturbance::zero(0),
    };
    let mut mix = crate::seed::rng(seed, "beta-mix", 0);
    let mut buffer = DemoBuffer::default();
    let mut expert_steps = 0;
    let mut step = 0;
    let mut obs = env.reset(seed)?;
    let mut traj = Trajectory {
        seed,
        dt: env.config().dt,
        observations: vec![obs],
        ..Default::default()
    };
    while !env.is_done() {
        let o_t = augment_observation(&obs, disturbance.at(step));
        let by_expert = mix.random::<f64>() < beta;
        let action = if by_expert {
            expert.evaluate(&obs)
        } else {
            learner.expect("checked above").evaluate(&o_t)
        };
        buffer.push(o_t.to_array(), expert.normalized(&obs));
        expert_steps += by_expert as usize;
        let out = env.step(&action)?;
        obs = out.observation;
        traj.observations.push(obs);
        traj.actions.push(out.record.action);
        traj.records.push(out.record);
        step += 1;
    }
    traj.completed = env.path_complete();
    buffer.episodes.push(EpisodeProvenance {
        seed,
        beta,
        steps: step,
        expert_steps,
    });
    Ok((buffer, traj))
}

/// Fit a learner to the buffer by mini-batch regression, starting from
/// `init` when it is a learned policy. Returns the policy and per-epoch
/// training losses (initial loss first).
pub fn train_bc(
    buffer: &DemoBuffer,
    init: Option<&Policy>,
    hidden: &[usize],
    train: &TrainConfig,
    bounds: &ActionBounds,
) -> Result<(Policy, Vec<f64>)> {
    if buffer.is_empty() {
        return Err(Error::invalid("demonstration buffer is empty"));
    }
    if buffer.observations.iter().any(|o| o.len() != OBS_DIM) || buffer.actions.iter().any(|a| a.len() != ACTION_DIM) {
        return Err(Error::invalid("demonstration dimensions do not match the environment"));
    }
    let (mut network, provenance) = match init.map(|p| &p.kind) {
        Some(PolicyKind::Learned(l)) => (l.network.clone(), l.provenance.clone()),
        _ => {
            let mut sizes = vec![OBS_DIM];
            sizes.extend_from_slice(hidden);
            sizes.push(ACTION_DIM);
            let norm = Normalization::fit(&buffer.observations, OBS_DIM);
            let mut rng = crate::seed::rng(train.seed, "mlp-init", 0);
            (Mlp::new(&sizes, norm, &mut rng)?, Provenance::default())
        }
    };
    let losses = network.train(&buffer.observations, &buffer.actions, train)?;
    Ok((Policy::learned(network, provenance, bounds)?, losses))
}

/// Mean episodic reward of `policy` over `seeds`.
pub fn mean_reward(env: &mut CutEnv, policy: &Policy, seeds: &[u64]) -> Result<f64> {
    let mut total = 0.0;
    for &s in seeds {
        total += rollout(env, policy, s, None)?.total_reward();
    }
    Ok(total / seeds.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub rounds: usize,
    pub demonstrations: usize,
    pub expert_reward: f64,
    pub learner_reward: f64,
    pub converged: bool,
}

/// Clone the expert on clean rollouts until the learner's reward is within
/// the configured tolerance of the expert's.
pub fn warm_start(
    env_config: &EnvConfig,
    expert: &Policy,
    config: &ImitationConfig,
    warm: &WarmStartConfig,
    seed: u64,
) -> Result<(Policy, WarmStartReport)> {
    let mut env = CutEnv::new(env_config.clone())?;
    let eval_seeds: Vec<u64> = (0..warm.eval_episodes.max(1) as u64)
        .map(|i| crate::seed::derive(seed, "warm-eval", i))
        .collect();
    let expert_reward = mean_reward(&mut env, expert, &eval_seeds)?;
    let mut buffer = DemoBuffer::default();
    let mut learner: Option<Policy> = None;
    let mut report = WarmStartReport {
        rounds: 0,
        demonstrations: 0,
        expert_reward,
        learner_reward: f64::NAN,
        converged: false,
    };
    for round in 0..warm.max_rounds.max(1) {
        for e in 0..warm.episodes_per_round {
            let s = crate::seed::derive(seed, "warm-collect", (round * warm.episodes_per_round + e) as u64);
            buffer.extend(collect(&mut env, expert, None, 1.0, None, s)?.0);
        }
        let train = config.train_config(crate::seed::derive(seed, "warm-train", round as u64));
        let (p, _) = train_bc(&buffer, learner.as_ref(), &config.hidden, &train, &env_config.bounds)?;
        report.rounds = round + 1;
        report.learner_reward = mean_reward(&mut env, &p, &eval_seeds)?;
        learner = Some(p);
        if (report.learner_reward - expert_reward).abs() <= warm.tolerance * expert_reward.abs() {
            report.converged = true;
            break;
        }
    }
    report.demonstrations = buffer.len();
    log::info!(
        "warm start: {} rounds, learner reward {:.4} vs expert {:.4}",
        report.rounds,
        report.learner_reward,
        report.expert_reward
    );
    Ok((learner.expect("at least one round"), report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationRun {
    pub policy: Policy,
    pub warm_start: Option<WarmStartReport>,
    /// β per collection episode.
    pub betas: Vec<f64>,
    /// Aggregate buffer size after each episode.
    pub buffer_sizes: Vec<usize>,
    pub episodes: Vec<EpisodeProvenance>,
    /// Final training-set loss of each training round.
    pub final_losses: Vec<f64>,
}

fn initial_learner(
    env_config: &EnvConfig,
    expert: &Policy,
    config: &ImitationConfig,
    seed: u64,
) -> Result<(Option<Policy>, Option<WarmStartReport>)> {
    match &config.warm_start {
        Some(w) => {
            let (p, r) = warm_start(env_config, expert, config, w, crate::seed::derive(seed, "warm", 0))?;
            Ok((Some(p), Some(r)))
        }
        None => Ok((None, None)),
    }
}

fn finish(mut policy: Policy, algorithm: &str, config: &ImitationConfig, env: &EnvConfig, seed: u64, betas: &[f64]) -> Policy {
    if let PolicyKind::Learned(l) = &mut policy.kind {
        l.provenance = Provenance {
            algorithm: algorithm.into(),
            config_hash: crate::hash::json_hash(&(config, env)),
            seed,
            betas: betas.to_vec(),
        };
    }
    policy
}

/// Behavioural cloning: expert-only episodes with corrected observations,
/// then one training round on the whole buffer.
pub fn run_bc(
    env_config: &EnvConfig,
    expert: &Policy,
    correction: Option<&GpCorrection>,
    config: &ImitationConfig,
    seed: u64,
) -> Result<ImitationRun> {
    config.validate()?;
    let (init, warm) = initial_learner(env_config, expert, config, seed)?;
    let mut env = CutEnv::new(env_config.clone())?;
    let mut buffer = DemoBuffer::default();
    let mut sizes = Vec::with_capacity(config.episodes);
    for i in 0..config.episodes {
        let s = crate::seed::derive(seed, "collect", i as u64);
        buffer.extend(collect(&mut env, expert, None, 1.0, correction, s)?.0);
        sizes.push(buffer.len());
    }
    let train = TrainConfig {
        epochs: config.bc_epochs,
        ..config.train_config(crate::seed::derive(seed, "train", 0))
    };
    let (policy, losses) = train_bc(&buffer, init.as_ref(), &config.hidden, &train, &env_config.bounds)?;
    let betas = vec![1.0; config.episodes];
    Ok(ImitationRun {
        policy: finish(policy, "bc", config, env_config, seed, &betas),
        warm_start: warm,
        betas,
        buffer_sizes: sizes,
        episodes: buffer.episodes,
        final_losses: vec![*losses.last().expect("initial loss is always present")],
    })
}

/// DAgger with per-step Bernoulli(β) mixing and retraining on the aggregate
/// buffer after every episode.
pub fn run_dagger(
    env_config: &EnvConfig,
    expert: &Policy,
    correction: Option<&GpCorrection>,
    config: &ImitationConfig,
    seed: u64,
) -> Result<ImitationRun> {
    config.validate()?;
    let (mut learner, warm) = initial_learner(env_config, expert, config, seed)?;
    let mut env = CutEnv::new(env_config.clone())?;
    let mut buffer = DemoBuffer::default();
    let mut run = ImitationRun {
        policy: expert.clone(),
        warm_start: warm,
        betas: Vec::with_capacity(config.episodes),
        buffer_sizes: Vec::with_capacity(config.episodes),
        episodes: Vec::new(),
        final_losses: Vec::new(),
    };
    for i in 0..config.episodes {
        let b = beta(i, config.beta_episodes);
        let s = crate::seed::derive(seed, "collect", i as u64);
        let (demo, _) = collect(&mut env, expert, learner.as_ref(), b, correction, s)?;
        buffer.extend(demo);
        let train = config.train_config(crate::seed::derive(seed, "train", i as u64));
        let (p, losses) = train_bc(&buffer, learner.as_ref(), &config.hidden, &train, &env_config.bounds)?;
        learner = Some(p);
        run.betas.push(b);
        run.buffer_sizes.push(buffer.len());
        run.final_losses.push(*losses.last().expect("initial loss is always present"));
    }
    run.episodes = buffer.episodes;
    run.policy = finish(learner.expect("at least one episode"), "dagger", config, env_config, seed, &run.betas);
    Ok(run)
}

/// Dispatch on [`ImitationConfig::algorithm`].
pub fn run(
    env_config: &EnvConfig,
    expert: &Policy,
    correction: Option<&GpCorrection>,
    config: &ImitationConfig,
    seed: u64,
) -> Result<ImitationRun> {
    match config.algorithm {
        Algorithm::Bc => run_bc(env_config, expert, correction, config, seed),
        Algorithm::Dagger => run_dagger(env_config, expert, correction, config, seed),
    }
}
