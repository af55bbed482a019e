//! Periodic Gaussian-process model of the residual disturbance force.
//!
//! Each force axis gets its own zero-mean GP with an exponential-sine
//! kernel. Training data are residuals between measured forces and the
//! mechanistic prediction, optionally condensed into time bins so that exact
//! inference stays tractable.

mod fit;
mod kernel;
mod model;

pub use fit::{fit, negative_log_likelihood, AxisFit, FitConfig, HyperoptResult, StartRecord};
pub use kernel::{kernel_eval, PeriodicKernel};
pub use model::{AxisGp, AxisHyper, AxisPosterior, GpMeta, GpModel, PosteriorSampler};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::AlignedDataset;
use crate::Vec3;

/// Disturbance targets for GP training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualTargets {
    pub times: Vec<f64>,
    pub residuals: Vec<Vec3>,
    /// Per-point variance added to σ² (N²); zero unless condensed.
    pub extra_noise: Vec<Vec3>,
    /// Set when no mechanistic prediction was subtracted.
    pub free_running: bool,
}

impl ResidualTargets {
    pub fn new(times: Vec<f64>, residuals: Vec<Vec3>) -> Result<Self> {
        let n = times.len();
        let t = Self {
            times,
            residuals,
            extra_noise: vec![[0.0; 3]; n],
            free_running: false,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        for len in [self.residuals.len(), self.extra_noise.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("residual times"));
        }
        if self.residuals.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("residuals"));
        }
        if self.extra_noise.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite("residual noise floor"));
        }
        Ok(())
    }
}

/// Measured minus predicted force for every aligned recording, stacked.
///
/// With `predicted = None` the recordings are treated as free-running and
/// the residual is the measured force itself.
pub fn compute_residuals(dataset: &AlignedDataset, predicted: Option<&[Vec<Vec3>]>) -> Result<ResidualTargets> {
    let grid = &dataset.time_grid;
    if let Some(pred) = predicted {
        if pred.len() != dataset.series.len() {
            return Err(Error::DimensionMismatch {
                expected: dataset.series.len(),
                found: pred.len(),
            });
        }
    }
    let mut times = Vec::with_capacity(grid.len() * dataset.series.len());
    let mut residuals = Vec::with_capacity(times.capacity());
    for i in 0..dataset.series.len() {
        let measured = dataset.denormalized(i);
        if measured.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: measured.len(),
            }
            .in_series(i));
        }
        match predicted {
            Some(pred) => {
                if pred[i].len() != grid.len() {
                    return Err(Error::DimensionMismatch {
                        expected: grid.len(),
                        found: pred[i].len(),
                    }
                    .in_series(i));
                }
                for (m, p) in measured.iter().zip(&pred[i]) {
                    residuals.push([m[0] - p[0], m[1] - p[1], m[2] - p[2]]);
                }
            }
            None => residuals.extend_from_slice(&measured),
        }
        times.extend_from_slice(grid);
    }
    let n = times.len();
    let out = ResidualTargets {
        times,
        residuals,
        extra_noise: vec![[0.0; 3]; n],
        free_running: predicted.is_none(),
    };
    out.validate()?;
    Ok(out)
}

/// Bin targets on a uniform time partition into at most `max_points` points.
///
/// Each non-empty bin yields its mean time and mean residual. The variance of
/// that mean (within-bin variance over count, plus any existing noise floor)
/// becomes the point's extra noise.
pub fn condense(targets: &ResidualTargets, max_points: usize) -> Result<ResidualTargets> {
    if max_points < 16 {
        return Err(Error::invalid("max_points must be at least 16"));
    }
    targets.validate()?;
    if targets.len() <= max_points {
        return Ok(targets.clone());
    }
    let (tmin, tmax) = targets
        .times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let width = (tmax - tmin) / max_points as f64;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); max_points];
    for (k, &t) in targets.times.iter().enumerate() {
        let b = if width > 0.0 {
            (((t - tmin) / width) as usize).min(max_points - 1)
        } else {
            k % max_points
        };
        bins[b].push(k);
    }
    let mut out = ResidualTargets {
        free_running: targets.free_running,
        ..Default::default()
    };
    for members in bins.iter().filter(|m| !m.is_empty()) {
        let c = members.len() as f64;
        let t = members.iter().map(|&k| targets.times[k]).sum::<f64>() / c;
        let mut mean = [0.0; 3];
        let mut floor = [0.0; 3];
        for a in 0..3 {
            mean[a] = members.iter().map(|&k| targets.residuals[k][a]).sum::<f64>() / c;
            let var = members
                .iter()
                .map(|&k| (targets.residuals[k][a] - mean[a]).powi(2))
                .sum::<f64>()
                / c;
            let inherited = members.iter().map(|&k| targets.extra_noise[k][a]).sum::<f64>() / (c * c);
            floor[a] = var / c + inherited;
        }
        out.times.push(t);
        out.residuals.push(mean);
        out.extra_noise.push(floor);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{build_dataset, DatasetConfig, ForceSeries};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn hyper(p: f64, l: f64, s: f64, n: f64) -> AxisHyper {
        AxisHyper {
            kernel: PeriodicKernel::new(p, l, s).unwrap(),
            noise_variance: n,
        }
    }

    fn same_axes(h: AxisHyper) -> [AxisHyper; 3] {
        [h, h, h]
    }

    fn model_from(h: AxisHyper, times: &[f64], y: &[f64]) -> GpModel {
        let residuals = y.iter().map(|&v| [v, -v, 0.5 * v]).collect();
        let targets = ResidualTargets::new(times.to_vec(), residuals).unwrap();
        GpModel::new(same_axes(h), targets, GpMeta::default()).unwrap()
    }

    /// Textbook conditioning with an explicit inverse.
    fn dense_oracle(h: &AxisHyper, x: &[f64], y: &[f64], xs: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = &h.kernel;
        let kxx = DMatrix::from_fn(x.len(), x.len(), |i, j| {
            k.eval(x[i], x[j]) + if i == j { h.noise_variance } else { 0.0 }
        });
        let ks = DMatrix::from_fn(x.len(), xs.len(), |i, j| k.eval(x[i], xs[j]));
        let kss = DMatrix::from_fn(xs.len(), xs.len(), |i, j| k.eval(xs[i], xs[j]));
        let inv = kxx.try_inverse().unwrap();
        let mean = ks.transpose() * &inv * DVector::from_column_slice(y);
        let cov = kss - ks.transpose() * inv * ks;
        (mean, cov)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn interpolates_training_points_when_noise_vanishes() {
        let times: Vec<f64> = (0..12).map(|i| i as f64 * 0.037).collect();
        let y: Vec<f64> = times.iter().map(|t| (9.0 * t).sin()).collect();
        let m = model_from(hyper(0.7, 1.0, 1.0, 1e-12), &times, &y);
        let post = m.axis(0).posterior(&times[3..4]);
        assert!((post.mean[0] - y[3]).abs() < 1e-6);
        assert!(post.cov[(0, 0)] < 1e-6);
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        // a short length scale decorrelates everything except exact period multiples
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let y = vec![3.0; 10];
        let m = model_from(hyper(1.0, 0.05, 2.0, 0.01), &times, &y);
        let post = m.axis(0).posterior(&[50.5]);
        assert!(post.mean[0].abs() < 1e-6);
        assert!((post.cov[(0, 0)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = crate::seed::rng(3, "test", 0);
        let x: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 2.0).collect();
        let y: Vec<f64> = x.iter().map(|t| (7.0 * t).sin() + 0.1 * rng.random::<f64>()).collect();
        let xs = [0.11, 0.5, 1.3, 2.4, 3.9];
        let h = hyper(0.9, 0.8, 1.5, 0.02);
        let m = model_from(h, &x, &y);
        let post = m.axis(0).posterior(&xs);
        let (mean, cov) = dense_oracle(&h, &x, &y, &xs);
        for i in 0..5 {
            assert!(rel_close(post.mean[i], mean[i], 1e-8));
            for j in 0..5 {
                assert!(rel_close(post.cov[(i, j)], cov[(i, j)], 1e-8));
            }
        }
    }

    #[test]
    fn nll_matches_explicit_determinant() {
        let mut rng = crate::seed::rng(4, "test", 0);
        let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.04).collect();
        let y: Vec<f64> = x.iter().map(|_| rng.random::<f64>() - 0.5).collect();
        let extra = vec![0.0; 25];
        let h = hyper(0.3, 0.7, 0.4, 0.05);
        let nll = negative_log_likelihood(&h, &x, &y, &extra).unwrap();
        let kxx = DMatrix::from_fn(25, 25, |i, j| {
            h.kernel.eval(x[i], x[j]) + if i == j { h.noise_variance } else { 0.0 }
        });
        let yv = DVector::from_column_slice(&y);
        let quad = (yv.transpose() * kxx.clone().try_inverse().unwrap() * &yv)[(0, 0)];
        let oracle = 0.5 * quad + 0.5 * kxx.determinant().ln() + 12.5 * (2.0 * std::f64::consts::PI).ln();
        assert!(rel_close(nll, oracle, 1e-8), "{nll} vs {oracle}");
        let m = model_from(h, &x, &y);
        assert!(rel_close(m.axis(0).nll(), oracle, 1e-8));
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.021).collect();
        let y: Vec<f64> = x.iter().map(|t| (17.0 * t).sin() + 0.3 * (5.0 * t).cos()).collect();
        let data = fit::AxisData {
            times: &x,
            y: DVector::from_column_slice(&y),
            extra: (0..30).map(|i| 0.001 * i as f64).collect(),
        };
        let x0 = fit::to_log(&hyper(0.41, 0.9, 0.8, 0.03));
        let (_, g) = fit::nll_and_grad(&x0, &data, true).unwrap();
        for j in 0..4 {
            let h = 1e-6;
            let mut up = x0;
            let mut dn = x0;
            up[j] += h;
            dn[j] -= h;
            let fd = (fit::nll_and_grad(&up, &data, false).unwrap().0
                - fit::nll_and_grad(&dn, &data, false).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5 * (1.0 + fd.abs()), "param {j}: {fd} vs {}", g[j]);
        }
    }

    fn prior_draw(h: &AxisHyper, x: &[f64], seed: u64) -> Vec<f64> {
        let n = x.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            h.kernel.eval(x[i], x[j]) + if i == j { h.noise_variance } else { 0.0 }
        });
        let l = k.cholesky().unwrap().unpack();
        let mut rng = crate::seed::rng(seed, "prior", 0);
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (l * z).iter().copied().collect()
    }

    #[test]
    fn recovers_period_from_prior_samples() {
        let truth = hyper(0.2, 1.0, 1.0, 0.05 * 0.05);
        let x: Vec<f64> = (0..160).map(|i| i as f64 / 80.0).collect();
        let y = prior_draw(&truth, &x, 11);
        let data = fit::AxisData {
            times: &x,
            y: DVector::from_column_slice(&y),
            extra: vec![0.0; x.len()],
        };
        let config = FitConfig {
            noise_init: 0.0025,
            seed: 5,
            ..Default::default()
        };
        let res = fit::fit_axis(&data, &config, 0).unwrap();
        let hits = res
            .starts
            .iter()
            .filter_map(|s| s.converged)
            .filter(|h| (h.kernel.period - 0.2).abs() < 0.01)
            .count();
        assert!(hits >= 3, "{:#?}", res.starts);
        assert!((res.best.kernel.period - 0.2).abs() < 0.01);
        for s in &res.starts {
            assert!(res.nll <= s.init_nll);
            assert!(res.nll <= s.nll);
        }
    }

    #[test]
    fn white_noise_is_explained_by_noise() {
        let mut rng = crate::seed::rng(8, "noise", 0);
        let times: Vec<f64> = (0..120).map(|i| i as f64 / 100.0).collect();
        let residuals: Vec<Vec3> = (0..120)
            .map(|_| std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * 0.5))
            .collect();
        let targets = ResidualTargets::new(times, residuals).unwrap();
        let res = fit(&targets, &FitConfig::default()).unwrap();
        for a in &res.axes {
            let ratio = a.best.kernel.signal_variance / a.best.noise_variance;
            assert!(ratio < 1.0, "{:?}", a.best);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let t = ResidualTargets::new(vec![0.0, 1.0], vec![[0.0; 3]; 2]).unwrap();
        assert!(fit(&t, &FitConfig::default()).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_matches_moments() {
        let times: Vec<f64> = (0..15).map(|i| i as f64 * 0.03).collect();
        let y: Vec<f64> = times.iter().map(|t| (11.0 * t).sin()).collect();
        let m = model_from(hyper(0.5, 0.6, 1.0, 0.1), &times, &y);
        let test = [0.21, 0.77];
        assert_eq!(m.sample(&test, 9).unwrap(), m.sample(&test, 9).unwrap());
        assert_ne!(m.sample(&test, 9).unwrap(), m.sample(&test, 10).unwrap());

        let post = m.posterior(&test[..1]);
        let sampler = m.sampler(&test[..1]).unwrap();
        let mut rng = crate::seed::rng(1, "mc", 0);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.draw(&mut rng)[0][0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (mu, s2) = (post[0].mean[0], post[0].cov[(0, 0)]);
        assert!((mean - mu).abs() < 3.0 * (s2 / n as f64).sqrt());
        // standard error of a sample variance for Gaussian draws
        assert!((var - s2).abs() < 3.0 * s2 * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn huge_noise_gives_prior_draws() {
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let y = vec![5.0; 10];
        let m = model_from(hyper(0.5, 1.0, 2.0, 1e8), &times, &y);
        let sampler = m.sampler(&[0.33]).unwrap();
        let mut rng = crate::seed::rng(2, "mc", 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.draw(&mut rng)[0][0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 2.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn posterior_mean_is_periodic() {
        let p = 0.25;
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = times.iter().map(|t| (2.0 * std::f64::consts::PI * t / p).sin()).collect();
        let m = model_from(hyper(p, 1.0, 1.0, 0.01), &times, &y);
        let a = m.axis(0).posterior(&[0.1, 0.37, 2.3]);
        let b = m.axis(0).posterior(&[0.1 + p, 0.37 + 2.0 * p, 2.3 + 7.0 * p]);
        for i in 0..3 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = times.iter().map(|t| t * t).collect();
        let m = model_from(hyper(0.5, 1.0, 2.0, 0.1), &times, &y);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gp.json");
        m.write_json(&path).unwrap();
        let back = GpModel::read_json(&path).unwrap();
        assert_eq!(back.hyper(), m.hyper());
        assert_eq!(back.mean(&[0.42]), m.mean(&[0.42]));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"signal_variance\"") && text.contains("\"p\""));
    }

    fn tiny_dataset() -> AlignedDataset {
        let forces: Vec<Vec3> = (0..50).map(|i| [i as f64, (i as f64 * 0.3).sin() * 4.0 + 2.0, 1.5]).collect();
        let s = ForceSeries::uniform(0.0, 500.0, forces).unwrap();
        build_dataset(&[s], None, &DatasetConfig::default()).unwrap()
    }

    #[test]
    fn residuals_subtract_prediction() {
        let ds = tiny_dataset();
        let measured = ds.denormalized(0);
        let same = compute_residuals(&ds, Some(&[measured.clone()])).unwrap();
        assert!(same.residuals.iter().flatten().all(|v| *v == 0.0));
        assert!(!same.free_running);

        let free = compute_residuals(&ds, None).unwrap();
        assert_eq!(free.residuals, measured);
        assert!(free.free_running);

        let bump = |t: f64| 0.7 * (40.0 * t).sin();
        let pred: Vec<Vec3> = measured
            .iter()
            .zip(&ds.time_grid)
            .map(|(m, &t)| [m[0] - bump(t), m[1] + bump(t), m[2]])
            .collect();
        let r = compute_residuals(&ds, Some(&[pred])).unwrap();
        for (res, &t) in r.residuals.iter().zip(&r.times) {
            assert!((res[0] - bump(t)).abs() < 1e-12);
            assert!((res[1] + bump(t)).abs() < 1e-12);
        }

        assert!(compute_residuals(&ds, Some(&[vec![[0.0; 3]; 3]])).is_err());
        assert!(compute_residuals(&ds, Some(&[])).is_err());
    }

    #[test]
    fn condense_bins() {
        let times: Vec<f64> = (0..35_000).map(|i| i as f64 / 500.0).collect();
        let t = ResidualTargets::new(times.clone(), vec![[2.0, -1.0, 0.5]; 35_000]).unwrap();
        let c = condense(&t, 1500).unwrap();
        assert_eq!(c.len(), 1500);
        assert!(c.residuals.iter().all(|r| *r == [2.0, -1.0, 0.5]));
        assert!(c.extra_noise.iter().flatten().all(|v| *v == 0.0));

        let small = ResidualTargets::new(times[..100].to_vec(), vec![[1.0; 3]; 100]).unwrap();
        assert_eq!(condense(&small, 1500).unwrap(), small);
        assert!(condense(&small, 8).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn posterior_variance_within_prior(
            p in 0.05f64..2.0, l in 0.1f64..5.0, s in 0.1f64..10.0, noise in 1e-4f64..1.0,
            seed in 0u64..1000, t in -3.0f64..3.0,
        ) {
            let mut rng = crate::seed::rng(seed, "prop", 0);
            let x: Vec<f64> = (0..15).map(|_| rng.random::<f64>() * 2.0).collect();
            let y: Vec<f64> = (0..15).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let h = hyper(p, l, s, noise);
            let m = model_from(h, &x, &y);
            let post = m.axis(0).posterior(&[t]);
            let v = post.cov[(0, 0)];
            prop_assert!(v >= -1e-9 * s);
            prop_assert!(v <= s + 1e-9 * s);
            let (mean, cov) = dense_oracle(&h, &x, &y, &[t]);
            let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!((post.mean[0] - mean[0]).abs() <= 1e-7 * scale * s.max(1.0) / noise.min(1.0));
            prop_assert!((v - cov[(0, 0)]).abs() <= 1e-7 * s / noise.min(1.0));
        }

        #[test]
        fn condensed_points_stay_finite(n in 20usize..400, max in 16usize..64, seed in 0u64..100) {
            let mut rng = crate::seed::rng(seed, "cond", 0);
            let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
            let res: Vec<Vec3> = (0..n).map(|_| std::array::from_fn(|_| rng.random::<f64>())).collect();
            let t = ResidualTargets::new(times, res).unwrap();
            let c = condense(&t, max).unwrap();
            prop_assert!(c.len() <= max);
            prop_assert!(c.validate().is_ok());
        }
    }
}
