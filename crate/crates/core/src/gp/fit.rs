use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{factorize, kernel_matrix, AxisHyper, TRAINING_RIDGES};
use super::{PeriodicKernel, ResidualTargets};
use crate::error::{Error, Result};

/// Below this the kernel is nearly white and competes with σ² for the same
/// variance.
const MIN_LENGTH_SCALE: f64 = 0.1;
/// Restarts search on an evenly strided subset of this many points; the
/// winner is then polished on the full data.
const SEARCH_POINTS: usize = 256;
const SCAN_POINTS: usize = 128;
const POLISH_ITERS: usize = 40;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Multi-start hyperparameter search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    /// Initial σ² (N²), typically the sensor noise under static load.
    pub noise_init: f64,
    pub seed: u64,
    pub max_iters: usize,
    /// Sampling rate of the training grid. Estimated from the times when absent.
    pub sample_rate_hz: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            noise_init: 0.01,
            seed: 0,
            max_iters: 200,
            sample_rate_hz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub init: AxisHyper,
    pub init_nll: f64,
    /// `None` when the start failed to factorize even with jitter.
    pub converged: Option<AxisHyper>,
    pub nll: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub best: AxisHyper,
    pub nll: f64,
    pub starts: Vec<StartRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperoptResult {
    pub axes: Vec<AxisFit>,
}

impl HyperoptResult {
    pub fn best(&self) -> [AxisHyper; 3] {
        [0, 1, 2].map(|a| self.axes[a].best)
    }

    /// Summed NLL over the three axes.
    pub fn nll(&self) -> f64 {
        self.axes.iter().map(|a| a.nll).sum()
    }
}

/// Training data for one scalar GP.
pub(crate) struct AxisData<'a> {
    pub times: &'a [f64],
    pub y: DVector<f64>,
    pub extra: Vec<f64>,
}

/// Negative log marginal likelihood with the Cholesky log-determinant.
pub fn negative_log_likelihood(hyper: &AxisHyper, times: &[f64], y: &[f64], extra_noise: &[f64]) -> Result<f64> {
    let data = AxisData {
        times,
        y: DVector::from_column_slice(y),
        extra: extra_noise.to_vec(),
    };
    let x = to_log(hyper);
    nll_and_grad(&x, &data, false).map(|(f, _)| f)
}

pub(crate) fn to_log(h: &AxisHyper) -> [f64; 4] {
    let k = h.kernel.to_log();
    [k[0], k[1], k[2], h.noise_variance.ln()]
}

pub(crate) fn from_log(x: &[f64]) -> AxisHyper {
    AxisHyper {
        kernel: PeriodicKernel::from_log(&x[..3]),
        noise_variance: x[3].exp(),
    }
}

/// NLL and, if requested, its gradient in `(ln p, ln l, ln σ_f², ln σ²)`.
pub(crate) fn nll_and_grad(x: &[f64; 4], data: &AxisData, with_grad: bool) -> Result<(f64, [f64; 4])> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log hyperparameters"));
    }
    let h = from_log(x);
    let n = data.times.len();
    let mut k = kernel_matrix(&h.kernel, data.times, data.times);
    for i in 0..n {
        k[(i, i)] += h.noise_variance + data.extra[i];
    }
    let (chol, _) = factorize(k, &TRAINING_RIDGES)?;
    let alpha = chol.solve(&data.y);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let f = 0.5 * data.y.dot(&alpha) + 0.5 * log_det + 0.5 * n as f64 * LN_2PI;
    if !f.is_finite() {
        return Err(Error::NonFinite("negative log likelihood"));
    }
    let mut g = [0.0; 4];
    if with_grad {
        let kinv = chol.inverse();
        for i in 0..n {
            let w = kinv[(i, i)] - alpha[i] * alpha[i];
            g[3] += w;
            let (_, dk) = h.kernel.eval_with_log_grad(0.0);
            for j in 0..3 {
                g[j] += 0.5 * w * dk[j];
            }
            for jj in 0..i {
                let w = kinv[(i, jj)] - alpha[i] * alpha[jj];
                let (_, dk) = h.kernel.eval_with_log_grad(data.times[i] - data.times[jj]);
                for j in 0..3 {
                    g[j] += w * dk[j];
                }
            }
        }
        g[3] *= 0.5 * h.noise_variance;
    }
    Ok((f, g))
}

struct Bounds {
    lo: [f64; 4],
    hi: [f64; 4],
}

impl Bounds {
    fn contains(&self, x: &[f64; 4]) -> bool {
        (0..4).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }
}

fn masked(mut g: [f64; 4], free: &[bool; 4]) -> [f64; 4] {
    for i in 0..4 {
        if !free[i] {
            g[i] = 0.0;
        }
    }
    g
}

/// BFGS with Armijo backtracking over the `free` coordinates; steps leaving
/// the box are rejected.
fn minimize(
    x0: [f64; 4],
    data: &AxisData,
    bounds: &Bounds,
    free: [bool; 4],
    max_iters: usize,
) -> Result<([f64; 4], f64)> {
    let eval = |x: &[f64; 4]| nll_and_grad(x, data, true).map(|(f, g)| (f, masked(g, &free)));
    let (mut f, mut g) = eval(&x0)?;
    let mut x = x0;
    let mut h = [[0.0; 4]; 4];
    let reset = |h: &mut [[f64; 4]; 4]| {
        *h = [[0.0; 4]; 4];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
    };
    reset(&mut h);
    let mut fresh = true;
    for _ in 0..max_iters {
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-6 {
            break;
        }
        let mut d = [0.0; 4];
        for i in 0..4 {
            d[i] = -(0..4).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = (0..4).map(|i| d[i] * g[i]).sum();
        if slope >= 0.0 {
            reset(&mut h);
            fresh = true;
            d = g.map(|v| -v);
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        // cap the step to one e-fold per coordinate
        let dmax = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut step = if dmax > 2.0 { 2.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            let trial: [f64; 4] = std::array::from_fn(|i| x[i] + step * d[i]);
            if bounds.contains(&trial) {
                if let Ok((ft, gt)) = eval(&trial) {
                    if ft <= f + 1e-4 * step * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if fresh {
                break;
            }
            reset(&mut h);
            fresh = true;
            continue;
        };
        let s: [f64; 4] = std::array::from_fn(|i| xn[i] - x[i]);
        let yv: [f64; 4] = std::array::from_fn(|i| gn[i] - g[i]);
        let sy: f64 = (0..4).map(|i| s[i] * yv[i]).sum();
        let converged = (f - fnew).abs() <= 1e-10 * (1.0 + f.abs());
        x = xn;
        f = fnew;
        g = gn;
        fresh = false;
        if converged {
            break;
        }
        if sy > 1e-12 {
            let hy: [f64; 4] = std::array::from_fn(|i| (0..4).map(|j| h[i][j] * yv[j]).sum());
            let yhy: f64 = (0..4).map(|i| yv[i] * hy[i]).sum();
            let rho = 1.0 / sy;
            for i in 0..4 {
                for j in 0..4 {
                    h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }
    Ok((x, f))
}

/// Evenly strided subset of at most `max` points.
struct Subsample {
    times: Vec<f64>,
    y: DVector<f64>,
    extra: Vec<f64>,
}

impl Subsample {
    fn of(data: &AxisData, max: usize) -> Self {
        let n = data.times.len();
        let idx: Vec<usize> = (0..n).step_by(n.div_ceil(max)).collect();
        Self {
            times: idx.iter().map(|&i| data.times[i]).collect(),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.y[i])),
            extra: idx.iter().map(|&i| data.extra[i]).collect(),
        }
    }

    fn data(&self) -> AxisData<'_> {
        AxisData {
            times: &self.times,
            y: self.y.clone(),
            extra: self.extra.clone(),
        }
    }
}

/// Profile the NLL over the period on a uniform frequency grid, holding the
/// other hyperparameters. Returns the best point if it improves on `x`.
fn scan_period(x: [f64; 4], f: f64, scan: &AxisData, data: &AxisData, bounds: &Bounds) -> Option<([f64; 4], f64)> {
    const MAX_GRID: usize = 4096;
    let times = scan.times;
    let span = times[times.len() - 1] - times[0];
    let f_lo = (-bounds.hi[0]).exp().max(1.0 / span);
    let f_hi = (-bounds.lo[0]).exp().min(0.5 * (times.len() - 1) as f64 / span);
    if !(f_hi > f_lo) {
        return None;
    }
    let df = (0.25 / span).max((f_hi - f_lo) / MAX_GRID as f64);
    let steps = ((f_hi - f_lo) / df).floor() as usize;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let freq = f_lo + k as f64 * df;
        let trial = [-freq.ln(), x[1], x[2], x[3]];
        if let Ok((v, _)) = nll_and_grad(&trial, scan, false) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((trial[0], v));
            }
        }
    }
    let (log_p, _) = best?;
    let trial = [log_p, x[1], x[2], x[3]];
    match nll_and_grad(&trial, data, false) {
        Ok((v, _)) if v < f => Some((trial, v)),
        _ => None,
    }
}

/// One restart: tune the variances at the initial period and length scale,
/// profile the period, then polish everything jointly.
fn local_search(x0: [f64; 4], data: &AxisData, scan: &AxisData, bounds: &Bounds, max_iters: usize) -> Result<([f64; 4], f64)> {
    let (mut x, mut f) = minimize(x0, data, bounds, [false, false, true, true], max_iters)?;
    if let Some((xs, fs)) = scan_period(x, f, scan, data, bounds) {
        (x, f) = (xs, fs);
    }
    let (xp, fp) = minimize(x, data, bounds, [true; 4], max_iters)?;
    Ok(if fp <= f { (xp, fp) } else { (x, f) })
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64, stratum: usize, strata: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let u = (stratum as f64 + rng.random::<f64>()) / strata as f64;
    (a + u * (b - a)).exp()
}

pub(crate) fn fit_axis(data: &AxisData, config: &FitConfig, axis: usize) -> Result<AxisFit> {
    let n = data.times.len();
    if n < 8 {
        return Err(Error::invalid(format!("GP fit needs at least 8 points, got {n}")));
    }
    if config.restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let (tmin, tmax) = data
        .times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let span = tmax - tmin;
    if !(span > 0.0) {
        return Err(Error::invalid("training times must span a positive interval"));
    }
    let rate = config.sample_rate_hz.unwrap_or((n - 1) as f64 / span);
    let mean = data.y.mean();
    let var = (data.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).max(1e-12);
    let p_lo = (2.0 / rate).min(span / 3.0);
    let p_hi = span / 3.0;
    let noise_init = if config.noise_init > 0.0 {
        config.noise_init
    } else {
        return Err(Error::invalid("noise_init must be positive"));
    };
    let bounds = Bounds {
        lo: [(0.5 / rate).min(p_lo).ln(), MIN_LENGTH_SCALE.ln(), (1e-6 * var).ln(), (1e-8 * var.min(noise_init)).ln()],
        hi: [(10.0 * span).ln(), 100.0f64.ln(), (1e4 * var).ln(), (1e4 * var.max(noise_init)).ln()],
    };

    let search = Subsample::of(data, SEARCH_POINTS);
    let scan = Subsample::of(data, SCAN_POINTS);
    let subsampled = search.times.len() < n;
    let starts: Vec<StartRecord> = (0..config.restarts)
        .into_par_iter()
        .map(|s| {
            let mut rng = crate::seed::rng(config.seed, "gp-restart", (axis * 1000 + s) as u64);
            let m = config.restarts;
            let init = AxisHyper {
                kernel: PeriodicKernel {
                    period: log_uniform(&mut rng, p_lo, p_hi, s, m),
                    length_scale: log_uniform(&mut rng, 0.1, 10.0, (s * 3 + 1) % m, m),
                    signal_variance: log_uniform(&mut rng, 0.01 * var, 100.0 * var, (s * 5 + 2) % m, m),
                },
                noise_variance: noise_init,
            };
            let x0 = to_log(&init);
            let init_nll = nll_and_grad(&x0, data, false).map(|r| r.0).unwrap_or(f64::INFINITY);
            let searched = local_search(x0, &search.data(), &scan.data(), &bounds, config.max_iters)
                .and_then(|(x, f)| if subsampled { nll_and_grad(&x, data, false).map(|r| (x, r.0)) } else { Ok((x, f)) });
            match searched {
                Ok((x, f)) if f <= init_nll || !init_nll.is_finite() => StartRecord {
                    init,
                    init_nll,
                    converged: Some(from_log(&x)),
                    nll: f,
                },
                Ok(_) => StartRecord {
                    init,
                    init_nll,
                    converged: Some(init),
                    nll: init_nll,
                },
                Err(e) => {
                    log::debug!("axis {axis} start {s} discarded: {e}");
                    StartRecord {
                        init,
                        init_nll,
                        converged: None,
                        nll: f64::INFINITY,
                    }
                }
            }
        })
        .collect();

    let best = starts
        .iter()
        .filter(|r| r.converged.is_some())
        .min_by(|a, b| a.nll.total_cmp(&b.nll))
        .ok_or(Error::AllRestartsFailed(config.restarts))?;
    let (mut hyper, mut nll) = (best.converged.expect("filtered"), best.nll);
    if subsampled {
        match minimize(to_log(&hyper), data, &bounds, [true; 4], config.max_iters.min(POLISH_ITERS)) {
            Ok((x, f)) if f < nll => (hyper, nll) = (from_log(&x), f),
            Ok(_) => {}
            Err(e) => log::debug!("axis {axis} polish failed: {e}"),
        }
    }
    Ok(AxisFit {
        best: hyper,
        nll,
        starts,
    })
}

/// Fit independent periodic GPs to each residual axis.
pub fn fit(targets: &ResidualTargets, config: &FitConfig) -> Result<HyperoptResult> {
    targets.validate()?;
    let axes = (0..3)
        .into_par_iter()
        .map(|a| {
            let data = AxisData {
                times: &targets.times,
                y: DVector::from_iterator(targets.len(), targets.residuals.iter().map(|r| r[a])),
                extra: targets.extra_noise.iter().map(|r| r[a]).collect(),
            };
            fit_axis(&data, config, a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HyperoptResult { axes })
}

