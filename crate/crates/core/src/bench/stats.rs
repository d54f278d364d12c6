//! Small statistics toolkit for benchmark aggregation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Median of `values`; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Percentile bootstrap 95% interval of a statistic over resampled indices.
pub fn bootstrap_ci<F>(n: usize, rng: &mut ChaCha8Rng, mut stat: F) -> (f64, f64)
where
    F: FnMut(&[usize]) -> f64,
{
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        stats.push(stat(&idx));
    }
    stats.sort_by(f64::total_cmp);
    (quantile_sorted(&stats, 0.025), quantile_sorted(&stats, 0.975))
}

pub fn bootstrap_median_ci(values: &[f64], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut buf = Vec::with_capacity(values.len());
    bootstrap_ci(values.len(), rng, |idx| {
        buf.clear();
        buf.extend(idx.iter().map(|&i| values[i]));
        median(&buf)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub n: usize,
}

/// Ordinary least squares `y = intercept + slope·x` with the slope's standard error.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Regression {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let nf = n as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - xm) * (a - xm);
        sxy += (a - xm) * (b - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Regression {
        slope,
        intercept,
        slope_se,
        n,
    }
}

/// Regression in log10–log10 space.
pub fn loglog_regression(x: &[f64], y: &[f64]) -> Regression {
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    linear_regression(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn regression_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let r = linear_regression(&x, &y);
        assert!((r.slope - 2.0).abs() < 1e-12 && (r.intercept - 1.0).abs() < 1e-12);
        assert!(r.slope_se < 1e-12);
        let r = loglog_regression(&[1.0, 10.0, 100.0], &[2.0, 20.0, 200.0]);
        assert!((r.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_se_matches_textbook() {
        // y = x + noise pattern; SE from the closed form for this small set.
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.2, 2.8, 4.1];
        let r = linear_regression(&x, &y);
        let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - r.intercept - r.slope * a).collect();
        let s2 = resid.iter().map(|e| e * e).sum::<f64>() / 3.0;
        assert!((r.slope_se - (s2 / 10.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_brackets_median_and_is_seeded() {
        let v: Vec<f64> = (0..51).map(|k| k as f64).collect();
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let ci = bootstrap_median_ci(&v, &mut a);
        assert_eq!(ci, bootstrap_median_ci(&v, &mut b));
        assert!(ci.0 < 25.0 && ci.1 > 25.0);
        assert!(ci.1 - ci.0 < 25.0);
    }
}
