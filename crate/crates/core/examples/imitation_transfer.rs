//! Fit a disturbance GP on synthetic residuals, then train BC and DAgger
//! learners on GP-corrected observations and compare them with the expert
//! in the augmented environment.
//!
//! cargo run --release --example imitation_transfer [episodes]

use cut_transfer::eval::{episode_seeds, evaluate_strategy};
use cut_transfer::gp::{compute_residuals, condense, fit, FitConfig, GpMeta, GpModel};
use cut_transfer::imitation::{run_bc, run_dagger, ExpertConfig, GpCorrection, ImitationConfig, Policy};
use cut_transfer::sim::{AugmentationConfig, CutEnv, EnvConfig};
use cut_transfer::synth::{generate, SynthConfig};
use cut_transfer::timeseries::{build_dataset, DatasetConfig};

fn main() -> cut_transfer::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let synth = SynthConfig::default();
    let data = generate(&synth, 7)?;
    let dataset = build_dataset(&data.trials, None, &DatasetConfig::default())?;
    let predicted = vec![data.mechanistic.forces().to_vec(); dataset.len()];
    let targets = condense(&compute_residuals(&dataset, Some(&predicted))?, 200)?;
    let result = fit(&targets, &FitConfig { seed: 3, ..Default::default() })?;
    let gp = GpModel::new(result.best(), targets, GpMeta::default())?;

    let mut env_config = EnvConfig::default();
    env_config.augmentation = Some(AugmentationConfig {
        gp_model_path: None,
        sensor_sigma: synth.noise_std,
    });
    let correction = GpCorrection::new(&gp, &env_config, synth.noise_std)?;
    let expert = Policy::scripted_expert(ExpertConfig::default(), &env_config.bounds);
    let config = ImitationConfig {
        episodes,
        beta_episodes: episodes.saturating_sub(1).max(1),
        warm_start: None,
        ..Default::default()
    };
    let bc = run_bc(&env_config, &expert, Some(&correction), &config, 0)?;
    let dagger = run_dagger(&env_config, &expert, Some(&correction), &config, 0)?;
    println!("bc buffer {} samples, dagger buffer {} samples", bc.buffer_sizes.last().unwrap_or(&0), dagger.buffer_sizes.last().unwrap_or(&0));

    let env = CutEnv::with_sampler(env_config.clone(), correction.sampler.clone())?;
    let seeds = episode_seeds(1_000, 10);
    let limits = env_config.bounds.rate_limits();
    for (name, policy) in [("expert", &expert), ("bc", &bc.policy), ("dagger", &dagger.policy)] {
        let (report, _) = evaluate_strategy(&env, policy, name, &seeds)?;
        println!(
            "{name:>7}: reward {:.4} ± {:.4}, completion {:.0}%, normalized action change {:.4}",
            report.summary.reward,
            report.summary.reward_std,
            100.0 * report.summary.completion_rate,
            report.normalized_action_change(&limits)
        );
    }
    Ok(())
}
