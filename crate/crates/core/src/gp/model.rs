use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PeriodicKernel, ResidualTargets};
use crate::error::{Error, Result};
use crate::Vec3;

/// Ridges tried, in order, when a covariance matrix fails to factorize.
pub(crate) const TRAINING_RIDGES: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
/// Relative to the mean posterior variance.
const SAMPLING_RIDGES: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

pub(crate) fn factorize(mut m: DMatrix<f64>, ridges: &[f64]) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut applied = 0.0;
    for &ridge in ridges {
        for i in 0..m.nrows() {
            m[(i, i)] += ridge - applied;
        }
        applied = ridge;
        if let Some(chol) = m.clone().cholesky() {
            return Ok((chol, ridge));
        }
    }
    Err(Error::NotPositiveDefinite { ridge: applied })
}

pub(crate) fn kernel_matrix(k: &PeriodicKernel, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| k.eval(a[i], b[j]))
}

/// Hyperparameters of one output axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisHyper {
    #[serde(flatten)]
    pub kernel: PeriodicKernel,
    /// σ² (N²).
    pub noise_variance: f64,
}

/// Scalar GP for one force axis, conditioned on its training data.
#[derive(Clone, Debug)]
pub struct AxisGp {
    pub hyper: AxisHyper,
    times: Vec<f64>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Predictive mean and covariance of the latent disturbance.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl AxisGp {
    /// `extra_noise` adds a per-point variance on top of σ².
    pub fn new(hyper: AxisHyper, times: &[f64], targets: &[f64], extra_noise: &[f64]) -> Result<Self> {
        hyper.kernel.validate()?;
        if !(hyper.noise_variance >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        if times.len() != targets.len() || times.len() != extra_noise.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: targets.len().min(extra_noise.len()),
            });
        }
        if times.is_empty() {
            return Err(Error::invalid("GP needs training data"));
        }
        let mut k = kernel_matrix(&hyper.kernel, times, times);
        for i in 0..times.len() {
            k[(i, i)] += hyper.noise_variance + extra_noise[i];
        }
        let (chol, _) = factorize(k, &TRAINING_RIDGES)?;
        let targets = DVector::from_column_slice(targets);
        let alpha = chol.solve(&targets);
        Ok(Self {
            hyper,
            times: times.to_vec(),
            targets,
            chol,
            alpha,
        })
    }

    pub fn posterior(&self, test: &[f64]) -> AxisPosterior {
        let k_star = kernel_matrix(&self.hyper.kernel, &self.times, test);
        let mean = k_star.transpose() * &self.alpha;
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k_star)
            .expect("Cholesky factor has a positive diagonal");
        let mut cov = kernel_matrix(&self.hyper.kernel, test, test) - v.transpose() * v;
        // exact symmetry for downstream factorization
        for i in 0..cov.nrows() {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        AxisPosterior { mean, cov }
    }

    /// Negative log marginal likelihood of the training targets.
    pub fn nll(&self) -> f64 {
        let n = self.times.len() as f64;
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        0.5 * self.targets.dot(&self.alpha) + 0.5 * log_det + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Three independent periodic GPs, one per force axis.
#[derive(Clone, Debug)]
pub struct GpModel {
    axes: [AxisGp; 3],
    training: ResidualTargets,
    pub meta: GpMeta,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GpMeta {
    #[serde(default)]
    pub dataset_hash: String,
    #[serde(default)]
    pub fit_nll: Vec<f64>,
    #[serde(default)]
    pub restarts: usize,
}

#[derive(Serialize, Deserialize)]
struct TrainingJson {
    times: Vec<f64>,
    residuals: Vec<Vec3>,
    #[serde(default)]
    extra_noise: Option<Vec<Vec3>>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    axes: [AxisHyper; 3],
    training: TrainingJson,
    meta: GpMeta,
}

impl GpModel {
    pub fn new(hyper: [AxisHyper; 3], training: ResidualTargets, meta: GpMeta) -> Result<Self> {
        training.validate()?;
        let axes = [0, 1, 2].map(|a| {
            let y: Vec<f64> = training.residuals.iter().map(|r| r[a]).collect();
            let extra: Vec<f64> = training.extra_noise.iter().map(|r| r[a]).collect();
            AxisGp::new(hyper[a], &training.times, &y, &extra)
        });
        let [x, y, z] = axes;
        Ok(Self {
            axes: [x?, y?, z?],
            training,
            meta,
        })
    }

    pub fn axis(&self, a: usize) -> &AxisGp {
        &self.axes[a]
    }

    pub fn hyper(&self) -> [AxisHyper; 3] {
        [0, 1, 2].map(|a| self.axes[a].hyper)
    }

    pub fn training(&self) -> &ResidualTargets {
        &self.training
    }

    /// Posterior over the latent disturbance at `test_times`, per axis.
    pub fn posterior(&self, test_times: &[f64]) -> [AxisPosterior; 3] {
        [0, 1, 2].map(|a| self.axes[a].posterior(test_times))
    }

    /// Posterior means as force vectors.
    pub fn mean(&self, test_times: &[f64]) -> Vec<Vec3> {
        let post = self.posterior(test_times);
        (0..test_times.len())
            .map(|i| [post[0].mean[i], post[1].mean[i], post[2].mean[i]])
            .collect()
    }

    /// Factorized posterior for repeated joint draws on a fixed grid.
    pub fn sampler(&self, test_times: &[f64]) -> Result<PosteriorSampler> {
        let post = self.posterior(test_times);
        let mut means = Vec::with_capacity(3);
        let mut factors = Vec::with_capacity(3);
        for p in post {
            let n = p.cov.nrows().max(1) as f64;
            let scale = (p.cov.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n).max(f64::MIN_POSITIVE);
            let (chol, _) = factorize(p.cov, &SAMPLING_RIDGES.map(|r| r * scale))?;
            means.push(p.mean);
            factors.push(chol.unpack());
        }
        Ok(PosteriorSampler {
            times: test_times.to_vec(),
            means,
            factors,
        })
    }

    /// One joint posterior draw; a pure function of `(self, test_times, seed)`.
    pub fn sample(&self, test_times: &[f64], seed: u64) -> Result<Vec<Vec3>> {
        let sampler = self.sampler(test_times)?;
        Ok(sampler.draw(&mut crate::seed::rng(seed, "gp-sample", 0)))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json: ModelJson = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_json(json)
    }

    fn to_json(&self) -> ModelJson {
        ModelJson {
            axes: self.hyper(),
            training: TrainingJson {
                times: self.training.times.clone(),
                residuals: self.training.residuals.clone(),
                extra_noise: Some(self.training.extra_noise.clone()),
            },
            meta: self.meta.clone(),
        }
    }

    fn from_json(json: ModelJson) -> Result<Self> {
        let n = json.training.times.len();
        let training = ResidualTargets {
            times: json.training.times,
            residuals: json.training.residuals,
            extra_noise: json.training.extra_noise.unwrap_or_else(|| vec![[0.0; 3]; n]),
            free_running: false,
        };
        Self::new(json.axes, training, json.meta)
    }
}

/// Cached posterior mean and covariance factor on a fixed time grid.
#[derive(Clone, Debug)]
pub struct PosteriorSampler {
    times: Vec<f64>,
    means: Vec<DVector<f64>>,
    factors: Vec<DMatrix<f64>>,
}

impl PosteriorSampler {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mean(&self, i: usize) -> Vec3 {
        [self.means[0][i], self.means[1][i], self.means[2][i]]
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec3> {
        let n = self.times.len();
        let mut out = vec![[0.0; 3]; n];
        for a in 0..3 {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = &self.means[a] + &self.factors[a] * z;
            for i in 0..n {
                out[i][a] = d[i];
            }
        }
        out
    }
}
