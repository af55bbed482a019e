use serde::{Deserialize, Serialize};

use super::NormalizedSeries;
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DtwOptions {
    /// Let the query end anywhere; the reference is always consumed fully.
    pub open_ended: bool,
    /// Sakoe-Chiba half-width in query samples around the scaled diagonal.
    pub window: Option<usize>,
}

/// Optimal symmetric2 alignment of a query onto a reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    /// `(reference index, query index)` pairs starting at `(0, 0)`.
    pub pairs: Vec<(usize, usize)>,
    /// Cumulative weighted distance divided by the sum of step weights.
    pub cost: f64,
}

impl WarpPath {
    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
            cost: 0.0,
        }
    }

    /// Check monotonicity, the symmetric2 step set, and index bounds.
    pub fn validate(&self, reference_len: usize, query_len: usize) -> Result<()> {
        let first = self.pairs.first().ok_or_else(|| Error::invalid("empty warp path"))?;
        if *first != (0, 0) {
            return Err(Error::invalid("warp path must start at (0, 0)"));
        }
        for w in self.pairs.windows(2) {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return Err(Error::invalid(format!(
                    "illegal warp step {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        for &(i, j) in &self.pairs {
            if i >= reference_len || j >= query_len {
                return Err(Error::invalid(format!(
                    "warp pair ({i}, {j}) outside {reference_len}x{query_len} grid"
                )));
            }
        }
        Ok(())
    }
}

fn distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

const DIAG: u8 = 0;
const UP: u8 = 1; // reference advances, query repeats
const LEFT: u8 = 2; // query advances, reference repeats
const NONE: u8 = 3;

/// Symmetric2 DTW over raw sample slices.
///
/// Diagonal steps weigh 2, horizontal and vertical steps weigh 1, and the
/// start cell counts as a diagonal step, so a path ending at
/// `(N - 1, m)` has total weight `N + m + 1`.
pub fn dtw_samples(reference: &[Vec3], query: &[Vec3], opts: &DtwOptions) -> Result<WarpPath> {
    let (n, m) = (reference.len(), query.len());
    if n == 0 || m == 0 {
        return Err(Error::invalid("DTW needs nonempty sequences"));
    }
    let slope = if n > 1 { (m - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    let allowed = |i: usize, j: usize| match opts.window {
        None => true,
        Some(w) => (j as f64 - i as f64 * slope).abs() <= w as f64 + 1e-9,
    };

    let mut steps = vec![NONE; n * m];
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            cur[j] = f64::INFINITY;
            if !allowed(i, j) {
                continue;
            }
            let d = distance(&reference[i], &query[j]);
            if i == 0 && j == 0 {
                cur[0] = 2.0 * d;
                steps[0] = DIAG;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut step = NONE;
            if i > 0 && j > 0 && prev[j - 1].is_finite() {
                best = prev[j - 1] + 2.0 * d;
                step = DIAG;
            }
            if i > 0 && prev[j].is_finite() {
                let c = prev[j] + d;
                if c < best {
                    best = c;
                    step = UP;
                }
            }
            if j > 0 && cur[j - 1].is_finite() {
                let c = cur[j - 1] + d;
                if c < best {
                    best = c;
                    step = LEFT;
                }
            }
            cur[j] = best;
            steps[i * m + j] = step;
        }
        if i + 1 < n {
            std::mem::swap(&mut prev, &mut cur);
        }
    }
    let last = &cur;

    let norm = |j: usize| last[j] / (n + j + 1) as f64;
    let end = if opts.open_ended {
        // ties resolve toward consuming more of the query
        (0..m)
            .filter(|&j| last[j].is_finite())
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if norm(b) < norm(j) => Some(b),
                _ => Some(j),
            })
    } else {
        last[m - 1].is_finite().then_some(m - 1)
    }
    .ok_or_else(|| Error::invalid("DTW window admits no complete path"))?;

    let cost = norm(end);
    let mut pairs = Vec::with_capacity(n + end);
    let (mut i, mut j) = (n - 1, end);
    loop {
        pairs.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match steps[i * m + j] {
            DIAG => {
                i -= 1;
                j -= 1;
            }
            UP => i -= 1,
            LEFT => j -= 1,
            _ => unreachable!("backtrack reached an unvisited cell"),
        }
    }
    pairs.reverse();
    Ok(WarpPath { pairs, cost })
}

/// Align `query` onto `reference` with symmetric2 DTW.
pub fn dtw_align(
    reference: &NormalizedSeries,
    query: &NormalizedSeries,
    open_ended: bool,
) -> Result<WarpPath> {
    dtw_samples(
        &reference.values,
        &query.values,
        &DtwOptions {
            open_ended,
            window: None,
        },
    )
}

/// Map the query onto the reference time grid along `path`.
///
/// Several query samples landing on one grid point are averaged; grid points
/// with no sample are linearly interpolated from their neighbours.
pub fn reindex(query: &NormalizedSeries, path: &WarpPath, time_grid: &[f64]) -> Result<NormalizedSeries> {
    let n = time_grid.len();
    if n == 0 {
        return Err(Error::invalid("empty time grid"));
    }
    let mut sums = vec![[0.0; 3]; n];
    let mut counts = vec![0usize; n];
    for &(i, j) in &path.pairs {
        if i >= n || j >= query.len() {
            return Err(Error::invalid(format!(
                "warp pair ({i}, {j}) outside {n}x{} grid",
                query.len()
            )));
        }
        for a in 0..3 {
            sums[i][a] += query.values[j][a];
        }
        counts[i] += 1;
    }
    let known: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
    if known.is_empty() {
        return Err(Error::invalid("warp path is empty"));
    }
    let mean = |i: usize| -> Vec3 { std::array::from_fn(|a| sums[i][a] / counts[i] as f64) };
    let mut values = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        while next < known.len() && known[next] < i {
            next += 1;
        }
        let v = if counts[i] > 0 {
            mean(i)
        } else if next == 0 {
            mean(known[0])
        } else if next == known.len() {
            mean(known[known.len() - 1])
        } else {
            let (lo, hi) = (known[next - 1], known[next]);
            let w = (i - lo) as f64 / (hi - lo) as f64;
            let (a, b) = (mean(lo), mean(hi));
            std::array::from_fn(|k| a[k] + w * (b[k] - a[k]))
        };
        values.push(v);
    }
    Ok(NormalizedSeries {
        timestamps: time_grid.to_vec(),
        values,
        mean: query.mean,
        stddev: query.stddev,
        zero_stddev: query.zero_stddev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Exhaustive oracle: walk every monotone symmetric2 path, accumulating
    /// the weighted distance forward, and keep the best normalized total.
    fn brute_force(reference: &[Vec3], query: &[Vec3], open_ended: bool) -> f64 {
        fn walk(
            r: &[Vec3],
            q: &[Vec3],
            i: usize,
            j: usize,
            acc: f64,
            open: bool,
            best: &mut f64,
        ) {
            let (n, m) = (r.len(), q.len());
            if i == n - 1 && (open || j == m - 1) {
                let c = acc / (n + j + 1) as f64;
                if c < *best {
                    *best = c;
                }
            }
            if i + 1 < n && j + 1 < m {
                let d = distance(&r[i + 1], &q[j + 1]);
                walk(r, q, i + 1, j + 1, acc + 2.0 * d, open, best);
            }
            if i + 1 < n {
                let d = distance(&r[i + 1], &q[j]);
                walk(r, q, i + 1, j, acc + d, open, best);
            }
            if j + 1 < m {
                let d = distance(&r[i], &q[j + 1]);
                walk(r, q, i, j + 1, acc + d, open, best);
            }
        }
        let mut best = f64::INFINITY;
        let d0 = distance(&reference[0], &query[0]);
        walk(reference, query, 0, 0, 2.0 * d0, open_ended, &mut best);
        best
    }

    fn path_cost(r: &[Vec3], q: &[Vec3], path: &WarpPath) -> f64 {
        let mut acc = 2.0 * distance(&r[0], &q[0]);
        for w in path.pairs.windows(2) {
            let (i, j) = w[1];
            let weight = if w[1].0 > w[0].0 && w[1].1 > w[0].1 { 2.0 } else { 1.0 };
            acc += weight * distance(&r[i], &q[j]);
        }
        let (n, end) = (r.len(), path.pairs.last().unwrap().1);
        acc / (n + end + 1) as f64
    }

    fn scalar(xs: &[f64]) -> Vec<Vec3> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    #[test]
    fn identical_sequences_follow_the_diagonal() {
        let x = scalar(&[0.0, 1.0, 3.0, 2.0, 2.0]);
        for open in [false, true] {
            let p = dtw_samples(&x, &x, &DtwOptions { open_ended: open, window: None }).unwrap();
            assert_eq!(p, WarpPath::identity(5));
        }
    }

    #[test]
    fn duplicated_sample_costs_nothing() {
        let r = scalar(&[0.0, 1.0, 2.0]);
        let q = scalar(&[0.0, 0.0, 1.0, 2.0]);
        let p = dtw_samples(&r, &q, &DtwOptions::default()).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs, vec![(0, 0), (0, 1), (1, 2), (2, 3)]);
        assert_eq!(brute_force(&r, &q, false), 0.0);
    }

    #[test]
    fn open_end_truncates_the_query() {
        let r = scalar(&[0.0, 1.0, 2.0]);
        let q = scalar(&[0.0, 1.0, 2.0, 9.0, 9.0]);
        let p = dtw_samples(&r, &q, &DtwOptions { open_ended: true, window: None }).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs.last(), Some(&(2, 2)));
        let closed = dtw_samples(&r, &q, &DtwOptions::default()).unwrap();
        assert!(closed.cost > 0.0);
    }

    #[test]
    fn matches_exhaustive_oracle_on_short_sequences() {
        let mut rng = crate::seed::rng(11, "dtw-oracle", 0);
        for _ in 0..60 {
            let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let r: Vec<Vec3> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
            let q: Vec<Vec3> = (0..m).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
            for open in [false, true] {
                let p = dtw_samples(&r, &q, &DtwOptions { open_ended: open, window: None }).unwrap();
                assert_eq!(p.cost, brute_force(&r, &q, open));
                assert_eq!(path_cost(&r, &q, &p), p.cost);
                p.validate(n, m).unwrap();
                assert_eq!(p.pairs.last().unwrap().0, n - 1);
                if !open {
                    assert_eq!(p.pairs.last().unwrap().1, m - 1);
                }
            }
        }
    }

    #[test]
    fn window_restricts_the_search() {
        let r = scalar(&[0.0, 0.0, 0.0, 5.0]);
        let q = scalar(&[5.0, 0.0, 0.0, 0.0]);
        let free = dtw_samples(&r, &q, &DtwOptions::default()).unwrap();
        let banded = dtw_samples(&r, &q, &DtwOptions { open_ended: false, window: Some(0) }).unwrap();
        assert!(banded.pairs.iter().all(|(i, j)| i == j));
        assert!(banded.cost >= free.cost);
    }

    #[test]
    fn reindex_averages_and_interpolates() {
        let q = NormalizedSeries {
            timestamps: vec![0.0, 1.0, 2.0],
            values: scalar(&[1.0, 3.0, 10.0]),
            mean: [0.0; 3],
            stddev: [1.0; 3],
            zero_stddev: [false; 3],
        };
        let identity = reindex(&q, &WarpPath::identity(3), &q.timestamps).unwrap();
        assert_eq!(identity.values, q.values);

        let merged = WarpPath { pairs: vec![(0, 0), (0, 1), (1, 2)], cost: 0.0 };
        let out = reindex(&q, &merged, &[0.0, 0.5]).unwrap();
        assert_eq!(out.values, scalar(&[2.0, 10.0]));

        let gappy = WarpPath { pairs: vec![(0, 0), (2, 2)], cost: 0.0 };
        let out = reindex(&q, &gappy, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(out.values[1], [5.5, 0.0, 0.0]);

        let bad = WarpPath { pairs: vec![(0, 0), (3, 1)], cost: 0.0 };
        assert!(reindex(&q, &bad, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn cost_is_nonnegative_and_zero_only_for_matches() {
        let mut rng = crate::seed::rng(12, "dtw", 0);
        for _ in 0..50 {
            let n = rng.random_range(2..20);
            let r: Vec<Vec3> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let mut q = r.clone();
            let p = dtw_samples(&r, &q, &DtwOptions::default()).unwrap();
            assert_eq!(p.cost, 0.0);
            q[n / 2][1] += 0.5;
            let p = dtw_samples(&r, &q, &DtwOptions::default()).unwrap();
            assert!(p.cost > 0.0);
        }
    }
}
