use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics, Statistics};

/// Unpaired two-tailed t-test with unequal variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub a: String,
    pub b: String,
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    pub p: f64,
}

/// `(t, df, p)` for samples `a` and `b`, or `None` when either has fewer
/// than two values.
pub fn welch(a: &[f64], b: &[f64]) -> Option<(f64, f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (a.mean(), b.mean());
    let (va, vb) = (a.variance() / na, b.variance() / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        // both samples constant
        return Some(if ma == mb {
            (0.0, na + nb - 2.0, 1.0)
        } else {
            ((ma - mb).signum() * f64::INFINITY, na + nb - 2.0, 0.0)
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Some((t, df, p))
}

/// Plot-ready summary of a reward sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub name: String,
    pub samples: Vec<f64>,
    /// Probabilities and matching quantiles.
    pub probabilities: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Gaussian kernel density evaluated on `grid`.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

pub const QUANTILE_PROBABILITIES: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];
const KDE_POINTS: usize = 64;

impl Distribution {
    pub fn new(name: &str, samples: &[f64]) -> Self {
        let mut data = Data::new(samples.to_vec());
        let quantiles = QUANTILE_PROBABILITIES.iter().map(|&p| data.quantile(p)).collect();
        let (grid, density, bandwidth) = kde(samples);
        Self {
            name: name.into(),
            samples: samples.to_vec(),
            probabilities: QUANTILE_PROBABILITIES.to_vec(),
            quantiles,
            grid,
            density,
            bandwidth,
        }
    }
}

/// Silverman's rule, floored so constant samples still give a finite peak.
fn kde(samples: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    if samples.is_empty() {
        return (Vec::new(), Vec::new(), 0.0);
    }
    let n = samples.len() as f64;
    let sd = if samples.len() > 1 { samples.std_dev() } else { 0.0 };
    let mut data = Data::new(samples.to_vec());
    let iqr = data.quantile(0.75) - data.quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let h = (0.9 * spread * n.powf(-0.2)).max(1e-6 * scale);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid: Vec<f64> = (0..KDE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (KDE_POINTS - 1) as f64)
        .collect();
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|x| norm * samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    (grid, density, h)
}

/// Trailing `window`-point moving average. Samples before the start are
/// taken equal to the first one.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let Some(&first) = x.first() else {
        return Vec::new();
    };
    let w = window.max(1);
    let mut sum = first * w as f64;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let leaving = if i >= w { x[i - w] } else { first };
        sum += x[i] - leaving;
        out.push(sum / w as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welch_closed_form() {
        let (t, df, p) = welch(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((t + 3.674).abs() < 1e-3, "{t}");
        assert!((t + 3.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((df - 4.0).abs() < 1e-12);
        assert!(p > 0.01 && p < 0.05);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = [0.3, 0.5, 0.4, 0.45];
        let (t, _, p) = welch(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        assert_eq!(welch(&[1.0; 3], &[1.0; 3]).unwrap().2, 1.0);
    }

    #[test]
    fn separated_supports_are_significant() {
        let a: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let sd = a.as_slice().std_dev();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0 * sd).collect();
        assert!(welch(&a, &b).unwrap().2 < 1e-3);
    }

    #[test]
    fn too_few_samples() {
        assert!(welch(&[1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[2.5; 80], 50), vec![2.5; 80]);
        let mut x = vec![0.0; 120];
        x[10] = 1.0;
        let m = moving_average(&x, 50);
        for (i, v) in m.iter().enumerate() {
            let expected = if (10..60).contains(&i) { 0.02 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "{i}: {v}");
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let s: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).cos()).collect();
        let d = Distribution::new("x", &s);
        let dx = d.grid[1] - d.grid[0];
        let area: f64 = d.density.iter().sum::<f64>() * dx;
        assert!((area - 1.0).abs() < 0.02, "{area}");
        assert_eq!(d.quantiles.len(), QUANTILE_PROBABILITIES.len());
        assert!(d.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn welch_is_antisymmetric(
            a in prop::collection::vec(-10.0f64..10.0, 2..20),
            b in prop::collection::vec(-10.0f64..10.0, 2..20),
        ) {
            let (t1, df1, p1) = welch(&a, &b).unwrap();
            let (t2, df2, p2) = welch(&b, &a).unwrap();
            prop_assert!((t1 + t2).abs() <= 1e-12 * (1.0 + t1.abs()) || (t1.is_infinite() && t1 == -t2));
            prop_assert!((p1 - p2).abs() < 1e-12);
            prop_assert!((df1 - df2).abs() < 1e-9 * (1.0 + df1.abs()));
        }
    }
}
