//! Evaluate the scripted expert, the linear regulator and the fixed-parameter
//! baseline on shared seeds and print the comparison tables.
//!
//! cargo run --release --example compare_strategies [out_dir]

use cut_transfer::eval::{baseline, compare, episode_seeds, evaluate_strategy};
use cut_transfer::imitation::{ExpertConfig, LinearPolicy, Policy};
use cut_transfer::sim::{CutEnv, EnvConfig};

fn main() -> cut_transfer::Result<()> {
    let config = EnvConfig::default();
    let env = CutEnv::new(config.clone())?;
    let seeds = episode_seeds(0, 20);
    let expert = Policy::scripted_expert(ExpertConfig::default(), &config.bounds);
    let regulator = Policy::linear(LinearPolicy::regulator(), &config.bounds)?;
    let (base_config, base_policy) = baseline(&config);
    let base_env = CutEnv::new(base_config)?;

    let reports = vec![
        evaluate_strategy(&env, &expert, "expert", &seeds)?.0,
        evaluate_strategy(&env, &regulator, "regulator", &seeds)?.0,
        evaluate_strategy(&base_env, &base_policy, "baseline", &seeds)?.0,
    ];
    let comparison = compare(&reports)?;
    println!("{:>10} {:>10} {:>10} {:>8} {:>8} {:>10}", "strategy", "reward", "std", "T (s)", "|e|", "MRV");
    for row in &comparison.rows {
        let s = &row.summary;
        println!(
            "{:>10} {:>10.4} {:>10.4} {:>8.2} {:>8.3} {:>10.1}",
            row.name, s.reward, s.reward_std, s.t, s.e, s.mrv
        );
    }
    for t in &comparison.tests {
        println!("{} vs {}: t = {:.3}, df = {:.1}, p = {:.3e}", t.a, t.b, t.t, t.df, t.p);
    }
    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir).map_err(|source| cut_transfer::Error::Io {
            path: dir.clone().into(),
            source,
        })?;
        for path in comparison.write_csv(&dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
