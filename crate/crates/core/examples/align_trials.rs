//! Generate lagged, warped copies of one force signal and align them.
//!
//! cargo run --example align_trials

use cut_transfer::synth::{generate, SynthConfig};
use cut_transfer::timeseries::{build_dataset, DatasetConfig};

fn main() -> cut_transfer::Result<()> {
    let config = SynthConfig {
        trials: 6,
        ..Default::default()
    };
    let data = generate(&config, 1)?;
    let dataset = build_dataset(&data.trials, None, &DatasetConfig::default())?;
    println!("reference trial: {}", dataset.reference_index);
    println!("{:>6} {:>10} {:>10} {:>10}", "trial", "true lag", "found lag", "dtw cost");
    for (i, (p, truth)) in dataset.provenance.iter().zip(&data.truth.trials).enumerate() {
        println!("{i:>6} {:>10} {:>10} {:>10.4}", truth.delay_samples, p.lag, p.dtw_cost);
    }
    Ok(())
}
