//! Strategy evaluation: seeded rollouts, metric tables, Welch tests and
//! plot-ready trace exports.

mod stats;

pub use stats::{moving_average, welch, Distribution, WelchTest, QUANTILE_PROBABILITIES};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imitation::Policy;
use crate::sim::{rollout, Action, CutEnv, EnvConfig, Trajectory};

/// Window of the force filter in exported traces (1 s at 50 Hz).
pub const TRACE_FILTER_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub steps: usize,
    pub completed: bool,
    pub reward: f64,
    /// MRV, time, path and force terms.
    pub reward_terms: [f64; 4],
    /// Completion time (s).
    pub t: f64,
    /// Mean transverse/normal path deviation `|(e_x, e_z)|` (mm).
    pub e: f64,
    /// Mean measured tool load `|F|` (N).
    pub f: f64,
    /// Removed volume (mm³).
    pub mrv: f64,
    /// Mean absolute per-step change of each action component.
    pub action_change: [f64; 5],
}

impl EpisodeMetrics {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let n = traj.records.len().max(1) as f64;
        let e = traj.records.iter().map(|r| r.path_error[0].hypot(r.path_error[2])).sum::<f64>() / n;
        let f = traj
            .records
            .iter()
            .map(|r| r.force.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / n;
        Self {
            seed: traj.seed,
            steps: traj.len(),
            completed: traj.completed,
            reward: traj.total_reward(),
            reward_terms: traj.reward_terms(),
            t: traj.duration(),
            e,
            f,
            mrv: traj.mrv(),
            action_change: traj.action_change(),
        }
    }
}

/// Means over episodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub episodes: usize,
    pub reward: f64,
    pub reward_std: f64,
    pub t: f64,
    pub e: f64,
    pub f: f64,
    pub mrv: f64,
    pub reward_terms: [f64; 4],
    pub action_change: [f64; 5],
    pub completion_rate: f64,
}

impl MetricSummary {
    pub fn from_episodes(episodes: &[EpisodeMetrics]) -> Self {
        let n = episodes.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n as f64;
        let reward = mean(&|m| m.reward);
        let reward_std = if n > 1 {
            (episodes.iter().map(|m| (m.reward - reward).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            episodes: n,
            reward,
            reward_std,
            t: mean(&|m| m.t),
            e: mean(&|m| m.e),
            f: mean(&|m| m.f),
            mrv: mean(&|m| m.mrv),
            reward_terms: std::array::from_fn(|i| mean(&|m| m.reward_terms[i])),
            action_change: std::array::from_fn(|i| mean(&|m| m.action_change[i])),
            completion_rate: mean(&|m| m.completed as u8 as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub name: String,
    pub augmented: bool,
    pub episodes: Vec<EpisodeMetrics>,
    pub summary: MetricSummary,
}

impl StrategyReport {
    pub fn new(name: impl Into<String>, augmented: bool, episodes: Vec<EpisodeMetrics>) -> Self {
        let summary = MetricSummary::from_episodes(&episodes);
        Self {
            name: name.into(),
            augmented,
            episodes,
            summary,
        }
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward).collect()
    }

    /// Mean action change summed over components, each in units of its
    /// rate limit.
    pub fn normalized_action_change(&self, limits: &[f64; 5]) -> f64 {
        (0..5).map(|i| self.summary.action_change[i] / limits[i]).sum()
    }

    /// Check the stored summary against one rebuilt from the episodes.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let fresh = MetricSummary::from_episodes(&self.episodes);
        let s = &self.summary;
        let pairs = [
            (s.reward, fresh.reward),
            (s.reward_std, fresh.reward_std),
            (s.t, fresh.t),
            (s.e, fresh.e),
            (s.f, fresh.f),
            (s.mrv, fresh.mrv),
            (s.completion_rate, fresh.completion_rate),
        ];
        let terms = s.reward_terms.iter().zip(&fresh.reward_terms);
        let changes = s.action_change.iter().zip(&fresh.action_change);
        let worst = pairs
            .iter()
            .map(|(a, b)| (a - b).abs())
            .chain(terms.chain(changes).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if s.episodes != fresh.episodes || !(worst <= tol) {
            return Err(Error::invalid(format!(
                "report {}: summary differs from its episodes by {worst:e}",
                self.name
            )));
        }
        for m in &self.episodes {
            let sum: f64 = m.reward_terms.iter().sum();
            if !((sum - m.reward).abs() <= tol * (1.0 + m.reward.abs())) {
                return Err(Error::invalid(format!(
                    "report {}: episode {} reward terms do not add up",
                    self.name, m.seed
                )));
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path.as_ref())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        r.check_consistency(1e-9)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        Ok(r)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Episode seeds `base, base + 1, ...`, shared by every strategy so
/// comparisons see the same constants, spindle phases and disturbances.
pub fn episode_seeds(base: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Run `policy` once per seed in copies of `env`, in parallel.
pub fn evaluate_strategy(
    env: &CutEnv,
    policy: &Policy,
    name: &str,
    seeds: &[u64],
) -> Result<(StrategyReport, Vec<Trajectory>)> {
    let trajectories: Vec<Trajectory> = seeds
        .par_iter()
        .map(|&s| rollout(&mut env.clone(), policy, s, None))
        .collect::<Result<_>>()?;
    let episodes = trajectories.iter().map(EpisodeMetrics::from_trajectory).collect();
    Ok((StrategyReport::new(name, env.is_augmented(), episodes), trajectories))
}

/// Fixed nominal process parameters: nominal feed (`t_Δ = 0`), 1 mm depth
/// of cut, initial gains held by a zero-rate constant policy.
pub fn baseline(env: &EnvConfig) -> (EnvConfig, Policy) {
    let mut config = env.clone();
    config.initial.t_delta = 0.0;
    config.initial.n_delta = 1.0;
    let policy = Policy::constant(Action::default(), &config.bounds);
    (config, policy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub augmented: bool,
    #[serde(flatten)]
    pub summary: MetricSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<SummaryRow>,
    pub distributions: Vec<Distribution>,
    /// Welch tests on episodic reward for every ordered pair `i < j`.
    pub tests: Vec<WelchTest>,
    pub notices: Vec<String>,
}

pub fn compare(reports: &[StrategyReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::invalid("comparison needs at least two reports"));
    }
    let mut notices = Vec::new();
    for r in reports.iter().filter(|r| r.episodes.len() < 2) {
        notices.push(format!(
            "{}: {} episode(s), significance tests skipped",
            r.name,
            r.episodes.len()
        ));
    }
    let mut tests = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            if let Some((t, df, p)) = welch(&reports[i].rewards(), &reports[j].rewards()) {
                tests.push(WelchTest {
                    a: reports[i].name.clone(),
                    b: reports[j].name.clone(),
                    t,
                    df,
                    p,
                });
            }
        }
    }
    Ok(Comparison {
        rows: reports
            .iter()
            .map(|r| SummaryRow {
                name: r.name.clone(),
                augmented: r.augmented,
                summary: r.summary.clone(),
            })
            .collect(),
        distributions: reports.iter().map(|r| Distribution::new(&r.name, &r.rewards())).collect(),
        tests,
        notices,
    })
}

impl Comparison {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path.as_ref())
    }

    /// `summary.csv`, `tests.csv` and `rewards.csv` (quantiles and raw
    /// episodic rewards) in `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let summary = dir.join("summary.csv");
        write_rows(
            &summary,
            &[
                "strategy", "augmented", "episodes", "reward", "reward_std", "t", "e", "f", "mrv", "r_mrv", "r_time",
                "r_path", "r_force", "completion_rate",
            ],
            self.rows.iter().map(|r| {
                let s = &r.summary;
                let mut row = vec![r.name.clone(), r.augmented.to_string(), s.episodes.to_string()];
                row.extend(
                    [s.reward, s.reward_std, s.t, s.e, s.f, s.mrv]
                        .iter()
                        .chain(&s.reward_terms)
                        .chain(std::iter::once(&s.completion_rate))
                        .map(|v| v.to_string()),
                );
                row
            }),
        )?;
        let tests = dir.join("tests.csv");
        write_rows(
            &tests,
            &["a", "b", "t", "df", "p"],
            self.tests
                .iter()
                .map(|t| vec![t.a.clone(), t.b.clone(), t.t.to_string(), t.df.to_string(), t.p.to_string()]),
        )?;
        let rewards = dir.join("rewards.csv");
        write_rows(
            &rewards,
            &["strategy", "kind", "key", "value"],
            self.distributions.iter().flat_map(|d| {
                let q = d
                    .probabilities
                    .iter()
                    .zip(&d.quantiles)
                    .map(|(p, q)| vec![d.name.clone(), "quantile".into(), p.to_string(), q.to_string()]);
                let s = d
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vec![d.name.clone(), "episode".into(), i.to_string(), v.to_string()]);
                q.chain(s).collect::<Vec<_>>()
            }),
        )?;
        Ok(vec![summary, tests, rewards])
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}


/// Write `<name>_traces.csv` per strategy. Force columns gain a trailing
/// 50-point moving average (`F_y_ma`, `F_z_ma`) computed per episode.
pub fn export_traces(strategies: &[(&str, &[Trajectory])], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = [
        "episode", "seed", "t", "t_delta", "n_delta", "Kp_x", "Kp_y", "Kp_z", "kp_rate_x", "kp_rate_y", "kp_rate_z",
        "feed_rate", "doc_rate", "e_x", "e_z", "F_y", "F_z", "F_y_ma", "F_z_ma",
    ];
    let mut written = Vec::new();
    for (name, trajectories) in strategies {
        let path = dir.join(format!("{name}_traces.csv"));
        let rows = trajectories.iter().enumerate().flat_map(|(k, traj)| {
            let fy: Vec<f64> = traj.records.iter().map(|r| r.force[1]).collect();
            let fz: Vec<f64> = traj.records.iter().map(|r| r.force[2]).collect();
            let (fy_ma, fz_ma) = (
                moving_average(&fy, TRACE_FILTER_WINDOW),
                moving_average(&fz, TRACE_FILTER_WINDOW),
            );
            traj.records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = r.action.to_array();
                    let mut row = vec![k.to_string(), traj.seed.to_string()];
                    row.extend(
                        [r.t, r.t_delta, r.n_delta, r.kp[0], r.kp[1], r.kp[2]]
                            .iter()
                            .chain(&a)
                            .chain(&[r.path_error[0], r.path_error[2], fy[i], fz[i], fy_ma[i], fz_ma[i]])
                            .map(|v| v.to_string()),
                    );
                    row
                })
                .collect::<Vec<_>>()
        });
        write_rows(&path, &header, rows)?;
        written.push(path);
    }
    Ok(written)
}
