//! Roll out the scripted expert and write a per-step trace.
//!
//! cargo run --example simulate_cut [trace.csv]

use cut_transfer::imitation::{ExpertConfig, Policy};
use cut_transfer::sim::{rollout, CutEnv, EnvConfig};

fn main() -> cut_transfer::Result<()> {
    let config = EnvConfig::default();
    let expert = Policy::scripted_expert(ExpertConfig::default(), &config.bounds);
    let mut env = CutEnv::new(config)?;
    let traj = rollout(&mut env, &expert, 1, None)?;
    println!(
        "{} steps, completed: {}, duration {:.2} s, removed {:.1} mm^3, reward {:.4}",
        traj.len(),
        traj.completed,
        traj.duration(),
        traj.mrv(),
        traj.total_reward()
    );
    let terms = traj.reward_terms();
    println!(
        "reward terms: mrv {:.4}, time {:.4}, path {:.4}, force {:.4}",
        terms[0], terms[1], terms[2], terms[3]
    );
    for r in traj.records.iter().step_by(50) {
        println!(
            "t = {:5.2}  depth {:.2} mm  feed adj {:+.2}  F = [{:+.2}, {:+.2}, {:+.2}] N",
            r.t, r.n_delta, r.t_delta, r.force[0], r.force[1], r.force[2]
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        traj.write_csv(&path)?;
        println!("trace written to {path}");
    }
    Ok(())
}
