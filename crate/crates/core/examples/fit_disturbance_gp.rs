//! Fit the periodic disturbance model to residuals of synthetic trials and
//! compare the recovered kernel with the generator's.
//!
//! cargo run --release --example fit_disturbance_gp [max_points]

use cut_transfer::gp::{compute_residuals, condense, fit, FitConfig, GpMeta, GpModel};
use cut_transfer::synth::{generate, SynthConfig};
use cut_transfer::timeseries::{build_dataset, DatasetConfig};

fn main() -> cut_transfer::Result<()> {
    let max_points = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let data = generate(&SynthConfig::default(), 7)?;
    let dataset = build_dataset(&data.trials, None, &DatasetConfig::default())?;
    let predicted = vec![data.mechanistic.forces().to_vec(); dataset.len()];
    let residuals = compute_residuals(&dataset, Some(&predicted))?;
    let targets = condense(&residuals, max_points)?;
    println!("{} residual samples condensed to {}", residuals.len(), targets.len());

    let result = fit(&targets, &FitConfig { seed: 3, ..Default::default() })?;
    for (axis, (f, truth)) in result.axes.iter().zip(&data.truth.kernels).enumerate() {
        println!(
            "axis {axis}: p = {:.4} (true {:.4}), l = {:.3} (true {:.3}), signal variance = {:.3} (true {:.3}), nll = {:.2}",
            f.best.kernel.period,
            truth.period,
            f.best.kernel.length_scale,
            truth.length_scale,
            f.best.kernel.signal_variance,
            truth.signal_variance,
            f.nll
        );
    }
    let model = GpModel::new(result.best(), targets, GpMeta::default())?;
    let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.05).collect();
    let sample = model.sample(&times, 11)?;
    for (t, (m, s)) in times.iter().zip(model.mean(&times).iter().zip(&sample)) {
        println!("t = {t:.2}: mean {m:.3?}, draw {s:.3?}");
    }
    Ok(())
}
