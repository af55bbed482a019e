use super::NormalizedSeries;
use crate::error::{Error, Result};
use crate::Vec3;

/// Summed per-axis cross-correlation `c(lag) = Σ_n Σ_axis a[n]·b[n + lag]`
/// for `lag` in `-(len_a - 1)..=len_b - 1`. Entry `k` holds lag
/// `k - (len_a - 1)`.
pub fn cross_correlation(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
    let (na, nb) = (a.len() as isize, b.len() as isize);
    (-(na - 1)..nb)
        .map(|lag| {
            let start = 0.max(-lag);
            let end = na.min(nb - lag);
            (start..end)
                .map(|n| {
                    let (x, y) = (&a[n as usize], &b[(n + lag) as usize]);
                    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
                })
                .sum()
        })
        .collect()
}

/// Lag (in samples) by which `b` trails `a`.
///
/// Ties go to the smallest absolute lag, then to the negative one.
pub fn coarse_align(a: &NormalizedSeries, b: &NormalizedSeries) -> Result<isize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("coarse alignment needs nonempty series"));
    }
    let corr = cross_correlation(&a.values, &b.values);
    let offset = a.len() as isize - 1;
    let mut best: Option<(f64, isize)> = None;
    for (k, &c) in corr.iter().enumerate() {
        let lag = k as isize - offset;
        best = match best {
            None => Some((c, lag)),
            Some((bc, bl)) => {
                let better = c > bc
                    || (c == bc
                        && (lag.abs() < bl.abs() || (lag.abs() == bl.abs() && lag < bl)));
                if better {
                    Some((c, lag))
                } else {
                    Some((bc, bl))
                }
            }
        };
    }
    Ok(best.map(|(_, l)| l).unwrap_or(0))
}

/// Undo a lag found by [`coarse_align`]: drop the first `lag` samples when
/// positive, or pad with copies of the first sample when negative.
pub fn shift_by_lag(values: &[Vec3], lag: isize) -> Vec<Vec3> {
    if lag >= 0 {
        let skip = (lag as usize).min(values.len().saturating_sub(1));
        values[skip..].to_vec()
    } else {
        let pad = lag.unsigned_abs();
        std::iter::repeat_n(values[0], pad)
            .chain(values.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::standardize;
    use proptest::prelude::*;
    use rand::Rng;

    fn norm(values: Vec<Vec3>) -> NormalizedSeries {
        let n = values.len();
        NormalizedSeries {
            timestamps: (0..n).map(|k| k as f64).collect(),
            values,
            mean: [0.0; 3],
            stddev: [1.0; 3],
            zero_stddev: [false; 3],
        }
    }

    fn delayed(a: &[Vec3], lag: isize) -> Vec<Vec3> {
        (0..a.len() as isize)
            .map(|n| {
                let src = n - lag;
                if src >= 0 && (src as usize) < a.len() {
                    a[src as usize]
                } else {
                    [0.0; 3]
                }
            })
            .collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = crate::seed::rng(seed, "xcorr", 0);
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identical_series_have_zero_lag() {
        let a = norm(noise(64, 3));
        assert_eq!(coarse_align(&a, &a).unwrap(), 0);
    }

    #[test]
    fn recovers_injected_delay() {
        let a = noise(300, 5);
        let b = delayed(&a, 17);
        assert_eq!(coarse_align(&norm(a), &norm(b)).unwrap(), 17);
    }

    #[test]
    fn quarter_period_sinusoid() {
        let period = 40.0;
        let n = 1000;
        let w = 2.0 * std::f64::consts::PI / period;
        let a: Vec<Vec3> = (0..n).map(|k| [(w * k as f64).sin(), 0.0, 0.0]).collect();
        let b: Vec<Vec3> = (0..n)
            .map(|k| [(w * (k as f64 - period / 4.0)).sin(), 0.0, 0.0])
            .collect();
        let a = standardize(vec![0.0; n], &a).unwrap();
        let b = standardize(vec![0.0; n], &b).unwrap();
        assert_eq!(coarse_align(&a, &b).unwrap(), 10);
    }

    #[test]
    fn ties_prefer_small_then_negative_lag() {
        // a = [1], b = [1, 1]: correlation equal at lags 0 and 1.
        let a = norm(vec![[1.0, 0.0, 0.0]]);
        let b = norm(vec![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(coarse_align(&a, &b).unwrap(), 0);
        // a = [1, 1], b = [1]: lags -1 and 0 tie.
        assert_eq!(coarse_align(&b, &a).unwrap(), 0);
        // a = [1, 0, 1], b = [1]: lags -2 and 0 tie; a zero-padded pair where
        // only ±1 exist: a = [1, 1, 1], b = [0, 1, 0] -> lags -1, 0, 1 all 1.
        let a = norm(vec![[1.0, 0.0, 0.0]; 3]);
        let b = norm(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3]]);
        assert_eq!(coarse_align(&a, &b).unwrap(), 0);
        let a = norm(vec![[1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]]);
        let b = norm(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3]]);
        assert_eq!(coarse_align(&a, &b).unwrap(), -1);
    }

    #[test]
    fn shift_undoes_lag() {
        let a = noise(20, 9);
        assert_eq!(shift_by_lag(&a, 3), a[3..].to_vec());
        let s = shift_by_lag(&a, -2);
        assert_eq!(s.len(), 22);
        assert_eq!(s[0], a[0]);
        assert_eq!(&s[2..], &a[..]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn recovers_any_half_length_lag(n in 40usize..160, frac in -0.5f64..0.5, seed in 0u64..1000) {
            let lag = (frac * n as f64).round() as isize;
            let a = noise(n, seed);
            let b = delayed(&a, lag);
            prop_assert_eq!(coarse_align(&norm(a), &norm(b)).unwrap(), lag);
        }
    }
}
